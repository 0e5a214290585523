//! Seeded synthetic temporal classification task.
//!
//! Each class owns one template: per input channel, a slow sinusoid with its
//! own amplitude and phase. A sample is its class template plus i.i.d.
//! Gaussian noise on every (timestep, channel) entry.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub label: usize,
    /// `timesteps x input_dim` input currents.
    pub inputs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub classes: usize,
    pub input_dim: usize,
    pub timesteps: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in self.train.iter().chain(&self.test) {
            counts[s.label] += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub samples_per_class: usize,
    pub timesteps: usize,
    pub input_dim: usize,
    /// Standard deviation of the additive noise.
    pub noise: f64,
    /// Cycles of the template sinusoid over the whole window.
    pub cycles: f64,
    /// Upper bound of template amplitudes.
    pub max_amplitude: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 3,
            samples_per_class: 200,
            timesteps: 4,
            input_dim: 16,
            noise: 0.4,
            cycles: 0.5,
            max_amplitude: 1.0,
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.classes < 2 {
            out.push(format!(
                "dataset.classes must be >= 2 (got {})",
                self.classes
            ));
        }
        if self.samples_per_class == 0 || self.timesteps == 0 || self.input_dim == 0 {
            out.push("dataset.samples_per_class, timesteps and input_dim must be >= 1".into());
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            out.push(format!("dataset.noise must be >= 0 (got {})", self.noise));
        }
        if !(self.max_amplitude.is_finite() && self.max_amplitude > 0.0) {
            out.push("dataset.max_amplitude must be > 0".into());
        }
        if !self.cycles.is_finite() {
            out.push("dataset.cycles must be finite".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            out.push(format!(
                "dataset.test_fraction must be in [0, 1) (got {})",
                self.test_fraction
            ));
        }
        out
    }
}

struct Template {
    amplitude: Vec<f64>,
    phase: Vec<f64>,
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    let bad = cfg.violations();
    if !bad.is_empty() {
        return Err(Error::Parameter(bad.join("; ")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let templates: Vec<Template> = (0..cfg.classes)
        .map(|_| Template {
            amplitude: (0..cfg.input_dim)
                .map(|_| rng.random::<f64>() * cfg.max_amplitude)
                .collect(),
            phase: (0..cfg.input_dim)
                .map(|_| rng.random::<f64>() * TAU)
                .collect(),
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("validated noise");

    let test_per_class = (cfg.samples_per_class as f64 * cfg.test_fraction).round() as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, tpl) in templates.iter().enumerate() {
        let mut samples: Vec<Sample> = (0..cfg.samples_per_class)
            .map(|_| {
                let inputs = (0..cfg.timesteps)
                    .map(|t| {
                        let angle = TAU * cfg.cycles * t as f64 / cfg.timesteps as f64;
                        (0..cfg.input_dim)
                            .map(|d| {
                                let clean =
                                    tpl.amplitude[d] * 0.5 * (1.0 + (angle + tpl.phase[d]).sin());
                                if cfg.noise > 0.0 {
                                    clean + noise.sample(&mut rng)
                                } else {
                                    clean
                                }
                            })
                            .collect()
                    })
                    .collect();
                Sample { label, inputs }
            })
            .collect();
        samples.shuffle(&mut rng);
        test.extend(samples.drain(..test_per_class));
        train.extend(samples);
    }
    train.shuffle(&mut rng);
    Ok(Dataset {
        classes: cfg.classes,
        input_dim: cfg.input_dim,
        timesteps: cfg.timesteps,
        train,
        test,
    })
}
