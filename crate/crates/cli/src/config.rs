//! TOML experiment configuration: parsing, defaults, unknown-key policy and
//! validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use shiftlif::analysis::SampleDistribution;
use shiftlif::energy::EnergyConstants;
use shiftlif::quantizer::MAX_PRECISION;
use shiftlif::training::{DeployConfig, SynthConfig, TrainConfig};
use shiftlif::{KernelMode, NeuronKind, NeuronParams};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "analyze")]
    Analyze,
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "ablate-K", alias = "ablate-k")]
    AblateK,
    #[serde(rename = "ablate-grid")]
    AblateGrid,
    #[serde(rename = "energy")]
    Energy,
    #[serde(rename = "kernel-check")]
    KernelCheck,
    #[serde(rename = "gen-data")]
    GenData,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Analyze,
        Experiment::Train,
        Experiment::AblateK,
        Experiment::AblateGrid,
        Experiment::Energy,
        Experiment::KernelCheck,
        Experiment::GenData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Analyze => "analyze",
            Experiment::Train => "train",
            Experiment::AblateK => "ablate-K",
            Experiment::AblateGrid => "ablate-grid",
            Experiment::Energy => "energy",
            Experiment::KernelCheck => "kernel-check",
            Experiment::GenData => "gen-data",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!(
                    "unknown experiment {s:?} (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

/// Synthetic dataset shape; the seed comes from the top-level `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub classes: usize,
    pub samples_per_class: usize,
    pub timesteps: usize,
    pub input_dim: usize,
    pub noise: f64,
    pub cycles: f64,
    pub max_amplitude: f64,
    pub test_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        DatasetSection {
            classes: d.classes,
            samples_per_class: d.samples_per_class,
            timesteps: d.timesteps,
            input_dim: d.input_dim,
            noise: d.noise,
            cycles: d.cycles,
            max_amplitude: d.max_amplitude,
            test_fraction: d.test_fraction,
        }
    }
}

impl DatasetSection {
    pub fn synth(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            classes: self.classes,
            samples_per_class: self.samples_per_class,
            timesteps: self.timesteps,
            input_dim: self.input_dim,
            noise: self.noise,
            cycles: self.cycles,
            max_amplitude: self.max_amplitude,
            test_fraction: self.test_fraction,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda_sr: f64,
    pub target_rate: f64,
    pub batch_size: usize,
    /// Hidden spiking layer widths.
    pub hidden: Vec<usize>,
    /// Storage width for the post-training fixed-point evaluation.
    pub weight_bits: u32,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            lambda_sr: t.lambda_sr,
            target_rate: t.target_rate,
            batch_size: t.batch_size,
            hidden: vec![32, 32],
            weight_bits: DeployConfig::default().weight_bits,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            lambda_sr: self.lambda_sr,
            target_rate: self.target_rate,
            seed,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSection {
    pub distributions: Vec<SampleDistribution>,
    pub precisions: Vec<u32>,
    pub samples: usize,
    pub bins: usize,
    pub v_max: f64,
    /// Residual tolerance for the entropy chain-rule identities.
    pub tolerance: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            distributions: vec![SampleDistribution::Exponential { rate: 4.0 }],
            precisions: vec![1, 2, 3],
            samples: 100_000,
            bins: 40,
            v_max: 2.0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergySection {
    pub kinds: Vec<NeuronKind>,
    pub binary: EnergyConstants,
    pub shift: EnergyConstants,
    pub integer: EnergyConstants,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            kinds: vec![NeuronKind::Lif, NeuronKind::ShiftLif, NeuronKind::IntLif],
            binary: EnergyConstants::binary_accumulate(),
            shift: EnergyConstants::shift_accumulate(),
            integer: EnergyConstants::int_mac(),
        }
    }
}

impl EnergySection {
    pub fn constants_for(&self, kind: NeuronKind) -> &EnergyConstants {
        match kind {
            NeuronKind::Lif => &self.binary,
            NeuronKind::ShiftLif => &self.shift,
            NeuronKind::IntLif | NeuronKind::UniformLif => &self.integer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSection {
    pub trials: usize,
    pub max_rows: usize,
    pub max_cols: usize,
    pub max_precision: u32,
    pub weight_bits: u32,
    pub frac_bits: u32,
    pub mode: KernelMode,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            trials: 100,
            max_rows: 256,
            max_cols: 256,
            max_precision: 8,
            weight_bits: 16,
            frac_bits: 12,
            mode: KernelMode::Exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSection {
    /// Precision factors swept by `ablate-K` and `ablate-grid`.
    pub precisions: Vec<u32>,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            precisions: vec![1, 2, 3, 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Experiment run by `shiftlif run`; subcommands override it.
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub neuron: NeuronParams,
    pub dataset: DatasetSection,
    pub training: TrainingSection,
    pub analysis: AnalysisSection,
    pub energy: EnergySection,
    pub kernel: KernelSection,
    pub ablation: AblationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Train,
            seed: 0,
            output_dir: PathBuf::from("out"),
            neuron: NeuronParams::default(),
            dataset: DatasetSection::default(),
            training: TrainingSection::default(),
            analysis: AnalysisSection::default(),
            energy: EnergySection::default(),
            kernel: KernelSection::default(),
            ablation: AblationSection::default(),
        }
    }
}

fn check_precisions(out: &mut Vec<String>, field: &str, ks: &[u32], min: u32) {
    if ks.is_empty() {
        out.push(format!("{field} must list at least one precision factor"));
    }
    for &k in ks {
        if k < min || k > MAX_PRECISION {
            out.push(format!("{field} entry {k} outside {min}..={MAX_PRECISION}"));
        }
    }
}

impl ExperimentConfig {
    /// Every violated invariant across all sections.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.neuron.violations();
        out.extend(self.dataset.synth(self.seed).violations());
        out.extend(self.training.train_config(self.seed).violations());
        if self.training.hidden.is_empty() || self.training.hidden.contains(&0) {
            out.push("training.hidden must list >= 1 layer widths, each >= 1".into());
        }
        if !(2..=32).contains(&self.training.weight_bits) {
            out.push(format!(
                "training.weight_bits must be in 2..=32 (got {})",
                self.training.weight_bits
            ));
        }

        let a = &self.analysis;
        if a.distributions.is_empty() {
            out.push("analysis.distributions must not be empty".into());
        }
        for d in &a.distributions {
            out.extend(d.violations());
        }
        check_precisions(&mut out, "analysis.precisions", &a.precisions, 0);
        if a.samples == 0 || a.bins == 0 {
            out.push("analysis.samples and analysis.bins must be >= 1".into());
        }
        if !(a.v_max.is_finite() && a.v_max > 0.0) {
            out.push(format!("analysis.v_max must be > 0 (got {})", a.v_max));
        }
        if !(a.tolerance.is_finite() && a.tolerance >= 0.0) {
            out.push("analysis.tolerance must be >= 0".into());
        }

        if self.energy.kinds.is_empty() {
            out.push("energy.kinds must not be empty".into());
        }
        for c in [
            &self.energy.binary,
            &self.energy.shift,
            &self.energy.integer,
        ] {
            out.extend(c.violations());
        }

        let k = &self.kernel;
        if k.max_rows == 0 || k.max_cols == 0 {
            out.push("kernel.max_rows and kernel.max_cols must be >= 1".into());
        }
        if k.max_precision > MAX_PRECISION {
            out.push(format!("kernel.max_precision must be <= {MAX_PRECISION}"));
        }
        if !(1..=32).contains(&k.weight_bits) || k.frac_bits >= k.weight_bits {
            out.push(format!(
                "kernel needs 0 <= frac_bits ({}) < weight_bits ({}) <= 32",
                k.frac_bits, k.weight_bits
            ));
        }

        check_precisions(
            &mut out,
            "ablation.precisions",
            &self.ablation.precisions,
            0,
        );
        out
    }
}

/// Dotted paths present in `user` but absent from `reference`. Arrays are not
/// descended into; their element schemas vary.
fn unknown_keys(user: &toml::Table, reference: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (key, value) in user {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (value, reference.get(key)) {
            (_, None) => out.push(path),
            (toml::Value::Table(u), Some(toml::Value::Table(r))) => unknown_keys(u, r, &path, out),
            _ => {}
        }
    }
}

/// Parsed, defaulted configuration plus any keys it did not recognize.
#[derive(Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub unknown_keys: Vec<String>,
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, CliError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("parse error: {e}")))?;
    let reference =
        toml::Table::try_from(ExperimentConfig::default()).expect("default config serializes");
    let mut unknown = Vec::new();
    unknown_keys(&table, &reference, "", &mut unknown);
    let config: ExperimentConfig = toml::from_str(text)
        .map_err(|e: toml::de::Error| CliError::Config(format!("invalid value: {e}")))?;
    Ok(LoadedConfig {
        config,
        unknown_keys: unknown,
    })
}

/// Read, parse and default a config file. `strict` turns unknown keys into
/// errors; otherwise they are logged and ignored. Validation is left to the
/// caller so command-line overrides can be applied first.
pub fn load_config(path: &Path, strict: bool) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let loaded = parse_config(&text)?;
    if !loaded.unknown_keys.is_empty() {
        let list = loaded.unknown_keys.join(", ");
        if strict {
            return Err(CliError::Config(format!("unknown keys: {list}")));
        }
        log::warn!("ignoring unknown config keys: {list}");
    }
    Ok(loaded.config)
}

pub fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let bad = cfg.violations();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "invalid configuration:\n  - {}",
            bad.join("\n  - ")
        )))
    }
}
