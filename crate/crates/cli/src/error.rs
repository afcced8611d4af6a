use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;
use voltvar::{Error, FlowError, ModelError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    Acceptance(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 0 success, 1 validation or I/O, 2 solver divergence, 3 acceptance failure.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Diverged(_) => 2,
            CliError::Acceptance(_) => 3,
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Flow(f @ FlowError::Diverged { .. }) => CliError::Diverged(f.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        Error::from(e).into()
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}
