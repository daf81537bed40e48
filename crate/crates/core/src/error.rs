use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum MarError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A row (component vector) has near-zero norm where a direction is required.
    #[error("degenerate row {index}: norm {norm:.3e} is below threshold")]
    DegenerateRow { index: usize, norm: f64 },

    /// Component vectors are linearly dependent where independence is required.
    #[error("linearly dependent rows: {0}")]
    DependentRows(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// An exact-enumeration routine was asked for an instance beyond its capacity gate.
    #[error("instance too large: {0}")]
    Capacity(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MarError>;
