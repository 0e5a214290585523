//! Versioned JSON checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "shiftlif-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    network: Network,
}

pub fn checkpoint_to_string(net: &Network) -> Result<String> {
    let env = Envelope {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        network: net.clone(),
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn checkpoint_from_str(text: &str) -> Result<Network> {
    let env: Envelope = serde_json::from_str(text)?;
    if env.format != CHECKPOINT_FORMAT {
        return Err(Error::Io(format!(
            "not a checkpoint file (format {:?})",
            env.format
        )));
    }
    if env.version != CHECKPOINT_VERSION {
        return Err(Error::Io(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            env.version
        )));
    }
    let bad = env.network.spec.violations();
    if !bad.is_empty() {
        return Err(Error::Parameter(bad.join("; ")));
    }
    Ok(env.network)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    checkpoint_from_str(&fs::read_to_string(path)?)
}
