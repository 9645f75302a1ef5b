//! Command-line front end for masked transport, graph regularizers and the
//! fine-tuning demo.

pub mod commands;
pub mod io;
pub mod report;

use gtot_core::Error;
use thiserror::Error as ThisError;

/// Failure classes, each mapped to a process exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("gradient check failed: {0}")]
    GradientCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::GradientCheck(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible(msg) => CliError::Infeasible(msg),
            other => CliError::Input(other.to_string()),
        }
    }
}
