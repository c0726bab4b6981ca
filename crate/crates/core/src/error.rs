use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FallError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}: file contains no data rows")]
    EmptyFile(PathBuf),

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("non-numeric cell at row {row}, column '{column}': {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column '{column}'")]
    NonFinite { row: usize, column: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("p is not on the probability simplex (sum {sum}, min entry {min})")]
    NotOnSimplex { sum: f64, min: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite result in {0}")]
    NonFiniteResult(&'static str),

    #[error("model file: {0}")]
    Format(String),

    #[error("model has no training samples")]
    EmptyModel,
}

pub type Result<T> = std::result::Result<T, FallError>;

pub(crate) fn invalid(msg: impl Into<String>) -> FallError {
    FallError::InvalidParameter(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> FallError {
    FallError::DimensionMismatch(msg.into())
}
