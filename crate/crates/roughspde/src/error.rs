use std::path::PathBuf;

use roughspde_core::error::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// A config value failed validation; `field` is the dotted key.
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("config: {0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    /// A worker failed; the paths before it completed.
    #[error("path {path} failed after {completed} completed paths: {source}")]
    Worker { path: u64, completed: usize, source: CoreError },
}

impl CliError {
    pub fn config(field: &str, message: impl std::fmt::Display) -> Self {
        CliError::Config { field: field.to_string(), message: message.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit code: 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) | CliError::Worker { source: e, .. } => {
                if e.is_validation() {
                    1
                } else {
                    2
                }
            }
            _ => 1,
        }
    }
}
