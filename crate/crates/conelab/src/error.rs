//! Failure classes of the command-line tool and their exit codes.

use conelab_core::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid configuration; exit code 2.
    #[error("validation failure: {0}")]
    Validation(String),
    /// A solver stage failed; exit code 3.
    #[error("solver failure: {0}")]
    Solver(String),
    /// At least one acceptance criterion failed; exit code 4.
    #[error("verification failure: {0}")]
    Verification(String),
    /// File-system failure; exit code 1.
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Configuration errors are validation failures, everything else raised by the core is a solver
/// failure.
impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::ClassDegeneracy { .. } | LabError::InvalidInput(_) => CliError::Validation(e.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
