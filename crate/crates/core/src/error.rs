use thiserror::Error;

/// Errors raised by the geometry, fitting and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GwrError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("tangent element outside the range of the log map (min eigenvalue of V + I is {min_eigenvalue:e})")]
    OutOfRange { min_eigenvalue: f64 },

    #[error("iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate reference measure: {0}")]
    DegenerateReference(String),

    #[error("empty input")]
    EmptyInput,

    #[error("sample block contains a unit with no observations")]
    EmptyBlock,

    #[error("empirical Hessian is singular (condition number {condition:e})")]
    SingularHessian { condition: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, GwrError>;
