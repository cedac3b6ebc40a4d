use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {column}: {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        msg: String,
    },

    #[error(transparent)]
    Core(#[from] pgh_core::Error),
}

impl BenchError {
    pub fn config(msg: impl Into<String>) -> Self {
        BenchError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, row: usize, column: impl Into<String>, msg: impl Into<String>) -> Self {
        BenchError::Parse {
            path: path.into(),
            row,
            column: column.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 2 invalid config, 3 iteration limit, 4 I/O, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Core(pgh_core::Error::Contract(_) | pgh_core::Error::Dimension { .. }) => 2,
            BenchError::Core(pgh_core::Error::IterationLimit { .. }) => 3,
            BenchError::Io { .. } | BenchError::Parse { .. } => 4,
            BenchError::Core(_) => 1,
        }
    }
}
