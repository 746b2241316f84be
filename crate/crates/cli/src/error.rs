use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Config { path: PathBuf, line: usize, message: String },

    #[error("{path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Input { context: String, source: fracvar::Error },

    #[error(transparent)]
    Core(#[from] fracvar::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(
                fracvar::Error::Eval(_)
                | fracvar::Error::EvalAt { .. }
                | fracvar::Error::InvalidNode { .. }
                | fracvar::Error::UnpatchableEndpoint { .. },
            ) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
