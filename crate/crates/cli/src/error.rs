use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("conflicting settings: {0}")]
    Conflict(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot serialize output: {0}")]
    Serialize(String),

    #[error(transparent)]
    Core(#[from] ergomlmc::Error),
}

impl CliError {
    /// Process exit status; every variant, and every core error kind, gets its own code.
    pub fn exit_code(&self) -> i32 {
        use ergomlmc::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse { .. } => 3,
            CliError::Conflict(_) => 4,
            CliError::Io { .. } => 5,
            CliError::Serialize(_) => 6,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) => 10,
                E::DimensionMismatch { .. } => 11,
                E::Unsupported(_) => 12,
                E::NumericOverflow { .. } => 13,
                E::AdaptivityFailure { .. } => 14,
                E::InvalidData(_) => 15,
                E::NonFiniteSample { .. } => 16,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
