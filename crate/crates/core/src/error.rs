use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("tensor shape {shape:?} needs {expected} elements, got {actual}")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite gradient at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("unknown task id {0}")]
    UnknownTask(usize),

    #[error("unknown task family `{0}`")]
    UnknownFamily(String),

    #[error("unknown relabel strategy `{0}` (expected none|random|hipi|hfr|hfr-bellman)")]
    UnknownStrategy(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration would visit {count} trajectories (limit {limit})")]
    EnumerationBound { count: u128, limit: u128 },

    #[error("malformed {what} at line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
