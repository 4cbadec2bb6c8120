//! Versioned JSON checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Hypernet, HypernetConfig, HypernetError, NamedParam};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: Architecture,
    pub config: HypernetConfig,
    pub master_seed: u64,
    /// Ids of every task the parameters were fitted or selected on.
    pub training_task_ids: Vec<u64>,
    pub parameters: Vec<NamedParam>,
}

impl Checkpoint {
    pub fn from_hypernet(net: &Hypernet, master_seed: u64, training_task_ids: Vec<u64>) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            architecture: net.config.architecture,
            config: net.config.clone(),
            master_seed,
            training_task_ids,
            parameters: net.params.params().to_vec(),
        }
    }

    pub fn to_hypernet(&self) -> Result<Hypernet, HypernetError> {
        if self.architecture != self.config.architecture {
            return Err(HypernetError::Checkpoint("architecture field disagrees with config".into()));
        }
        Hypernet::from_params(self.config.clone(), &self.parameters)
    }

    pub fn to_json(&self) -> Result<String, HypernetError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, HypernetError> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(HypernetError::Checkpoint(format!(
                "unsupported format_version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), HypernetError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HypernetError> {
        Checkpoint::from_json(&std::fs::read_to_string(path)?)
    }
}
