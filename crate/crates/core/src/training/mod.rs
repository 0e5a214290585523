//! Surrogate-gradient training of small fully connected spiking networks.

mod checkpoint;
mod dataset;
mod deploy;
mod fit;
mod loss;
mod network;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use dataset::{synth_dataset, Dataset, Sample, SynthConfig};
pub use deploy::{evaluate_fixed_point, DeployConfig, DeployReport};
pub use fit::{evaluate, fit, write_history, EpochRecord, Evaluation, FitResult, TrainConfig};
pub use loss::{
    cross_entropy, rate_penalty_grad, softmax, spike_rate_loss, ste_mask, total_loss,
    LossBreakdown, SpikeBuffer,
};
pub use network::{
    batch_loss, forward_backward, simulate, Dense, Gradients, HiddenLayerSpec, Network,
    NetworkSpec, Readout, Simulation, SpikeFunction, StepOutput,
};
