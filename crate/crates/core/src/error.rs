use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    Dimension {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("index out of range for field `{field}`: id {id} >= vocab size {size}")]
    Index { field: String, id: u32, size: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: impl Into<String>, rhs: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.into(),
            rhs: rhs.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

pub type Result<T> = std::result::Result<T, Error>;
