//! Orchestration of the numerical laboratory: configuration files, run directories with
//! checkpoints and manifests, the acceptance verification, parameter sweeps and reports.

pub mod artifacts;
pub mod checkpoint;
pub mod error;
pub mod manifest;
pub mod run;
pub mod summary;
pub mod svg;
pub mod sweep;
pub mod verify;

pub use error::{CliError, CliResult};
