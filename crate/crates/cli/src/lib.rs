//! Experiment runner: configuration, subcommands and report files.

pub mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{load_config, parse_config, validate, Experiment, ExperimentConfig};
pub use experiments::run_experiment;
pub use output::{Outputs, MANIFEST_FILE};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    Acceptance(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] shiftlif::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Acceptance(_) => 3,
            CliError::Io(_) => 4,
            CliError::Core(shiftlif::Error::Io(_)) => 4,
            CliError::Core(shiftlif::Error::Parameter(_)) => 2,
            CliError::Core(_) => 3,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "shiftlif",
    version,
    about = "Power-of-two spiking neuron experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for data generation, initialization, shuffling and sampling.
    #[arg(long, global = true, env = "SHIFTLIF_SEED")]
    pub seed: Option<u64>,
    /// Directory receiving report files.
    #[arg(long, global = true, value_name = "DIR", env = "SHIFTLIF_OUT")]
    pub out: Option<PathBuf>,
    /// Reject unknown configuration keys instead of warning.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantization error, entropy and utilization on sample distributions.
    Analyze,
    /// Train one network on the synthetic task.
    Train,
    /// Sweep the precision factor K for ShiftLIF.
    #[command(name = "ablate-K", alias = "ablate-k")]
    AblateK,
    /// Power-of-two versus uniform multi-level spikes across K.
    AblateGrid,
    /// Energy estimates for trained LIF, ShiftLIF and integer networks.
    Energy,
    /// Shift-accumulate kernel against the floating-point reference.
    KernelCheck,
    /// Write the synthetic dataset as CSV.
    GenData,
    /// Run the experiment named in the configuration file.
    Run,
}

impl Command {
    fn experiment(&self) -> Option<Experiment> {
        Some(match self {
            Command::Analyze => Experiment::Analyze,
            Command::Train => Experiment::Train,
            Command::AblateK => Experiment::AblateK,
            Command::AblateGrid => Experiment::AblateGrid,
            Command::Energy => Experiment::Energy,
            Command::KernelCheck => Experiment::KernelCheck,
            Command::GenData => Experiment::GenData,
            Command::Run => return None,
        })
    }
}

/// Resolve the configuration from file, environment and flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(path) => load_config(path, cli.common.strict)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = cli.command.experiment() {
        cfg.experiment = e;
    }
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        cfg.output_dir = out.clone();
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> ExitCode {
    let result = resolve_config(cli).and_then(|cfg| run_experiment(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shiftlif: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
