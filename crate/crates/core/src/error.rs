use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad blocks, mismatched dimensions, unparsable files.
    #[error("validation error: {0}")]
    Validation(String),

    /// Parameters outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative method ran out of iterations.
    #[error("no convergence after {iterations} iterations (best estimate {best}, residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        best: f64,
        residual: f64,
    },

    /// Exact integer arithmetic left the 64-bit range.
    #[error("integer overflow in exact operator arithmetic")]
    Overflow,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code used by the CLI: 2 for numerical non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } => 2,
            _ => 1,
        }
    }
}
