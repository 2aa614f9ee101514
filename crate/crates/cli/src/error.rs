use thiserror::Error;

use warpgreen_core::Error as CoreError;

/// Failure of a CLI run, carrying the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },
    #[error("validation failed: {0}")]
    Validation(CoreError),
    #[error("solver failed: {0}")]
    Convergence(CoreError),
    #[error("identity suite failed: {0}")]
    Identity(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { field: field.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Validation(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Identity(_) => 4,
            CliError::Io(_) | CliError::Serialize(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NoConvergence { .. } | CoreError::NonPositiveIterate { .. } | CoreError::JacobianSingular => {
                CliError::Convergence(e)
            }
            other => CliError::Validation(other),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}
