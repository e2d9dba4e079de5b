use thiserror::Error;

/// Library-wide error type.
///
/// Structural problems (shape mismatches, bad arguments) are kept distinct from
/// invariant violations found in otherwise well-formed data, because the CLI
/// maps them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    /// A quadratic form that must be inverted in the Gaussian calculus is
    /// numerically singular.
    #[error("singular quadratic form: {0}")]
    SingularForm(String),

    /// The oracle's polynomial algebra exceeded its degree cap; this is an
    /// internal consistency failure, never a recoverable condition.
    #[error("polynomial degree {got} exceeds cap {cap}")]
    DegreeOverflow { got: usize, cap: usize },

    /// Input data violates a declared invariant (reported with the residual).
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
