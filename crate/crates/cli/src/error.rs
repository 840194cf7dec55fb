use std::path::PathBuf;

use thiserror::Error;

/// Failures of a command, split by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent input: exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// The computation itself failed (no root, step-size underflow, blow-up…): exit code 3.
    #[error("numeric failure: {0}")]
    Numeric(#[source] twisted_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<twisted_core::Error> for CliError {
    fn from(e: twisted_core::Error) -> Self {
        use twisted_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::IndexOutOfRange { .. } | E::DimensionMismatch { .. } | E::Format(_) => {
                CliError::Config(e.to_string())
            }
            E::Io(source) => CliError::Io { path: PathBuf::from("<stream>"), source },
            other => CliError::Numeric(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
