use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum GdroError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("root solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid uncertainty set: {0}")]
    InvalidUncertaintySet(String),
    #[error("group index {index} out of range for {groups} groups")]
    GroupOutOfRange { index: usize, groups: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("csv error at row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GdroError>;
