use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FppError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FppError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid NPY file: {0}")]
    Npy(String),

    #[error("row {row}, column '{column}': {message}")]
    BadCell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range (length {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("targets have zero variance")]
    ZeroVariance,

    #[error("label {label} is not below class count {class_count}")]
    LabelOutOfRange { label: usize, class_count: usize },

    #[error("projection is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("training diverged at epoch {epoch} after {halvings} learning-rate halvings")]
    Diverged { epoch: usize, halvings: usize },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<FppError>,
    },
}

impl FppError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FppError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FppError::InvalidArgument(msg.into())
    }
}
