use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ModnetError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ModnetError {
    /// Structure and parameters disagree on the (module, parent) key set.
    #[error("structural mismatch: {0}")]
    StructuralMismatch(String),

    /// `I - W` is singular or its condition number exceeds the threshold.
    #[error("I - W is singular or ill-conditioned (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ModnetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ModnetError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        ModnetError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
