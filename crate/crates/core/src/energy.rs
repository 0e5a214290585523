//! Event-driven energy estimate for spiking layers.
//!
//! A layer costs `T * s * (E_acc + E_move + E_weight) * synapses`, with `s` the
//! mean absolute spike amplitude. The per-event constants are configuration;
//! the defaults below are placeholders, not measured silicon numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{NeuronKind, SpikeTensor};
use crate::synapse_kernel::op_counter;

const PJ_PER_MJ: f64 = 1e9;

/// Per-synaptic-event energies in picojoules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyConstants {
    pub profile: String,
    pub e_acc: f64,
    pub e_move: f64,
    pub e_weight: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        EnergyConstants::shift_accumulate()
    }
}

impl EnergyConstants {
    /// Shift followed by integer add.
    pub fn shift_accumulate() -> Self {
        EnergyConstants {
            profile: "shift_acc".into(),
            e_acc: 0.03,
            e_move: 0.02,
            e_weight: 0.05,
        }
    }

    /// Plain add of a binary event.
    pub fn binary_accumulate() -> Self {
        EnergyConstants {
            profile: "binary_acc".into(),
            e_acc: 0.03,
            e_move: 0.02,
            e_weight: 0.05,
        }
    }

    /// Integer multiply-accumulate for multi-level integer spikes.
    pub fn int_mac() -> Self {
        EnergyConstants {
            profile: "int_mac".into(),
            e_acc: 0.2,
            e_move: 0.02,
            e_weight: 0.05,
        }
    }

    pub fn for_kind(kind: NeuronKind) -> Self {
        match kind {
            NeuronKind::Lif => EnergyConstants::binary_accumulate(),
            NeuronKind::ShiftLif => EnergyConstants::shift_accumulate(),
            NeuronKind::IntLif | NeuronKind::UniformLif => EnergyConstants::int_mac(),
        }
    }

    pub fn per_event(&self) -> f64 {
        self.e_acc + self.e_move + self.e_weight
    }

    pub fn violations(&self) -> Vec<String> {
        [
            ("e_acc", self.e_acc),
            ("e_move", self.e_move),
            ("e_weight", self.e_weight),
        ]
        .iter()
        .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
        .map(|(name, v)| format!("energy.{name} must be >= 0 (got {v})"))
        .collect()
    }
}

/// Mean absolute spike amplitude over every (timestep, neuron) entry.
pub fn spike_rate(spikes: &SpikeTensor) -> Result<f64> {
    if spikes.is_empty() {
        return Err(Error::Parameter("spike tensor is empty".into()));
    }
    let total: f64 = spikes.entries().iter().map(|s| s.amplitude().abs()).sum();
    Ok(total / spikes.entries().len() as f64)
}

/// Fraction of entries carrying a nonzero spike.
pub fn event_rate(spikes: &SpikeTensor) -> Result<f64> {
    if spikes.is_empty() {
        return Err(Error::Parameter("spike tensor is empty".into()));
    }
    Ok(spikes.nonzero_count() as f64 / spikes.entries().len() as f64)
}

/// Layer energy in millijoules.
pub fn layer_energy(
    timesteps: usize,
    rate: f64,
    synapse_count: u64,
    constants: &EnergyConstants,
) -> Result<f64> {
    if timesteps == 0 {
        return Err(Error::Parameter("energy needs T >= 1".into()));
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::Parameter(format!(
            "spike rate must be >= 0 (got {rate})"
        )));
    }
    let bad = constants.violations();
    if !bad.is_empty() {
        return Err(Error::Parameter(bad.join("; ")));
    }
    Ok(timesteps as f64 * rate * constants.per_event() * synapse_count as f64 / PJ_PER_MJ)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEnergy {
    pub layer: String,
    pub timesteps: usize,
    pub spike_rate: f64,
    pub event_rate: f64,
    /// Nonzero spikes times fan-out.
    pub synaptic_events: u64,
    pub synapse_count: u64,
    pub energy_mj: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub profile: String,
    pub layers: Vec<LayerEnergy>,
    pub total_mj: f64,
}

impl EnergyReport {
    pub fn new(profile: impl Into<String>) -> Self {
        EnergyReport {
            profile: profile.into(),
            ..Default::default()
        }
    }

    /// Add a layer whose neurons each drive `fan_out` synapses.
    /// `spikes` holds one sample's `T x N` output; `samples` samples are
    /// summarized if several were concatenated along time.
    pub fn push_layer(
        &mut self,
        name: impl Into<String>,
        spikes: &SpikeTensor,
        timesteps: usize,
        fan_out: usize,
        constants: &EnergyConstants,
    ) -> Result<()> {
        let rate = spike_rate(spikes)?;
        let synapse_count = (spikes.neurons() * fan_out) as u64;
        let energy_mj = layer_energy(timesteps, rate, synapse_count, constants)?;
        self.layers.push(LayerEnergy {
            layer: name.into(),
            timesteps,
            spike_rate: rate,
            event_rate: event_rate(spikes)?,
            synaptic_events: op_counter(spikes, fan_out).synaptic_visits,
            synapse_count,
            energy_mj,
        });
        self.total_mj = self.layers.iter().map(|l| l.energy_mj).sum();
        Ok(())
    }
}
