use gwr_core::GwrError;
use thiserror::Error;

/// Exit code for usage, input and configuration errors.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for numerical and degeneracy errors.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError::Numeric(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => EXIT_INPUT,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<GwrError> for CliError {
    fn from(e: GwrError) -> Self {
        match e {
            GwrError::DimensionMismatch { .. }
            | GwrError::LengthMismatch { .. }
            | GwrError::EmptyInput
            | GwrError::EmptyBlock
            | GwrError::InvalidConfig(_) => CliError::Input(e.to_string()),
            GwrError::NotPositiveSemidefinite { .. }
            | GwrError::NotPositiveDefinite { .. }
            | GwrError::OutOfRange { .. }
            | GwrError::NoConvergence { .. }
            | GwrError::DegenerateInput(_)
            | GwrError::DegenerateReference(_)
            | GwrError::SingularHessian { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(format!("CSV: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io { context: "I/O".into(), source: e }
    }
}
