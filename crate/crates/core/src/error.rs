use std::path::PathBuf;

/// Errors produced by the change-detection library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("pair index ({u}, {v}) out of range for m = {m}")]
    PairOutOfRange { u: usize, v: usize, m: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("non-finite feature value at sample {sample}, pair ({u}, {v})")]
    NonFiniteFeature { sample: usize, u: usize, v: usize },

    #[error("matrix with {cols} columns exceeds the dense limit of {limit}")]
    TooLarge { cols: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precision matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("slice sampler bracket collapsed on coordinate {coordinate}")]
    SliceCollapse { coordinate: usize },

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    CsvFormat(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
