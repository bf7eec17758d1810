use std::path::PathBuf;

use thiserror::Error;
use vrsverb_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Infeasible(String),

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("rerun differs from manifest: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) | CliError::Mismatch(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidRoom(_)
            | CoreError::OutsideRoom(_)
            | CoreError::UnsupportedVrsCount(_)
            | CoreError::UnknownFixture(_)
            | CoreError::InvalidArgument(_)
            | CoreError::SignalTooShort { .. } => CliError::Config(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
