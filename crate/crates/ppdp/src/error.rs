use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("diagonal map entry must be strictly positive, got {0}")]
    NonPositiveDiagonal(f64),

    #[error("power iteration did not converge within {0} iterations")]
    PowerIterationDiverged(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("assumption violation: {0}")]
    AssumptionViolation(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("support enumeration exhausted (game larger than {0}x{0})")]
    EnumerationExhausted(usize),

    #[error("candidate solution fails the inclusion check (residual {0:.3e})")]
    SolutionCheck(f64),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
