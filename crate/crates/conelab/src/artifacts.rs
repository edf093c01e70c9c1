//! Configuration loading, hashing and JSON/text file helpers.

use crate::error::{CliError, CliResult};
use conelab_core::ModelConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> CliResult<ModelConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let config: ModelConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Hex SHA-256 of the canonical JSON serialization of a configuration.
pub fn config_hash(config: &ModelConfig) -> String {
    json_hash(config)
}

/// Hex SHA-256 of the compact JSON serialization of `value`.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_string(value).expect("value serializes");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    // write to a sibling file first so an interrupted write never leaves a truncated artifact
    let tmp = path.with_extension("partial");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
