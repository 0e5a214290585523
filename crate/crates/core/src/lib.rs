//! Multi-level spiking neurons with power-of-two spike amplitudes.
//!
//! - [`quantizer`]: shift, integer and uniform spike alphabets.
//! - [`neuron`]: LIF, ShiftLIF, integer and uniform multi-level neurons.
//! - [`synapse_kernel`]: multiplier-free shift-accumulate over fixed-point weights.
//! - [`analysis`]: quantization error, output entropy and bit utilization.
//! - [`energy`]: event-driven energy estimate.
//! - [`training`]: BPTT with straight-through gradients and spike-rate penalty.

pub mod analysis;
pub mod energy;
pub mod error;
pub mod neuron;
pub mod quantizer;
pub mod synapse_kernel;
pub mod training;

pub use error::{Error, Result};
pub use neuron::{NeuronKind, NeuronLayer, NeuronParams, NeuronState, SpikeTensor};
pub use quantizer::{GridKind, LevelSet, ShiftMode, SpikeLevel};
pub use synapse_kernel::{FixedPointMatrix, KernelMode};
