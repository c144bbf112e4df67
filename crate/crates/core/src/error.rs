use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("sequence length {len} exceeds capacity {max}")]
    Capacity { len: usize, max: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: timestamp does not increase")]
    NonMonotonic { path: PathBuf, line: usize },

    #[error("channel {channel} is constant over the training split (min == max == {value})")]
    DegenerateScale { channel: usize, value: f64 },

    #[error("insufficient data: {what} needs {needed} rows, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("label key {0:?} not found")]
    MissingKey(String),

    #[error("label window {index} ends before it starts ({start} > {end})")]
    InvalidInterval { index: usize, start: String, end: String },

    #[error("unsupported bundle format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed bundle: {0}")]
    Bundle(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
