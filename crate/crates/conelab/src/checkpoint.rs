//! Schema-versioned rung checkpoints.

use crate::artifacts::{read_json, write_json};
use crate::error::{CliError, CliResult};
use crate::manifest::ARTIFACT_SCHEMA_VERSION;
use conelab_core::pipeline::RungProgress;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config_hash: String,
    pub rung: usize,
    pub progress: RungProgress,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }

    /// Loads a checkpoint and checks that it belongs to the configuration with `config_hash`.
    pub fn load(path: &Path, config_hash: &str) -> CliResult<Self> {
        let cp: Checkpoint = read_json(path)?;
        if cp.schema_version != ARTIFACT_SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "{}: checkpoint schema {} (expected {ARTIFACT_SCHEMA_VERSION})",
                path.display(),
                cp.schema_version
            )));
        }
        if cp.config_hash != config_hash {
            return Err(CliError::Validation(format!(
                "{}: checkpoint belongs to another configuration",
                path.display()
            )));
        }
        Ok(cp)
    }
}
