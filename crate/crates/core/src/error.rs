use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("unknown label index {label} in trace `{trace_id}` (label count {label_count})")]
    UnknownLabel {
        trace_id: String,
        label: usize,
        label_count: usize,
    },

    #[error("trace `{trace_id}` has a null {which} label")]
    NullLabel { trace_id: String, which: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("criterion {criterion} is undefined: {reason}")]
    UndefinedCriterion {
        criterion: &'static str,
        reason: String,
    },

    #[error("criterion {criterion}: only {non_empty} suite(s) have a non-empty covered subset, need at least 2")]
    InsufficientCoverage {
        criterion: &'static str,
        non_empty: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
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

    /// True for errors caused by the input data rather than by the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(values: &[f64], context: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context: context() })
    }
}
