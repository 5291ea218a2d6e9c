use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Missing {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Core(#[from] bcnn_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bcnn_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Missing { .. } => 3,
            CliError::Incompatible(_) => 4,
            CliError::Core(
                E::Parse { .. }
                | E::ShapeMismatch(_)
                | E::DimensionMismatch(_)
                | E::InvalidState(_),
            ) => 3,
            CliError::Core(E::OutOfRange(_) | E::Unsupported(_)) => 2,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}
