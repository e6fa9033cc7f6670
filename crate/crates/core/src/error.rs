use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at iteration {iteration} (theta = {theta:?}, gamma = {gamma:?})")]
    Divergence {
        iteration: usize,
        theta: Vec<f64>,
        gamma: Vec<f64>,
    },

    #[error(
        "{block} is singular even after jitter {max_jitter:e}; collect more data or inspect the model"
    )]
    Singular {
        block: &'static str,
        max_jitter: f64,
    },

    #[error("quadratic form {value:e} is negative; covariance is not positive semidefinite")]
    NegativeVariance { value: f64 },

    #[error("{path}: line {line}, column {column}: {reason}")]
    Parse {
        path: String,
        line: usize,
        column: String,
        reason: String,
    },

    #[error("{path}: {reason}")]
    Format { path: String, reason: String },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("{path}: checksum mismatch (header {expected:016x}, body {actual:016x})")]
    Checksum {
        path: String,
        expected: u64,
        actual: u64,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (divergence, singular information)
    /// as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::Singular { .. } | Error::NegativeVariance { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
