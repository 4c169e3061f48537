//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by matching, inference, screening, and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Input collection was empty where at least one element is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Every paired difference is zero, so no test statistic can be formed.
    #[error("degenerate statistic: all paired differences are zero")]
    DegenerateStatistic,

    /// A parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two inputs that must cover the same outcomes do not.
    #[error("mismatched inputs: {0}")]
    MismatchedInput(String),

    /// The observed information matrix is singular (collinear covariates).
    #[error("singular information matrix: {0}")]
    SingularInformation(String),

    /// Newton iterations did not reach the gradient tolerance.
    #[error(
        "partial-likelihood maximization did not converge after {iterations} iterations \
         (gradient sup-norm {grad_norm:.3e}); log-likelihood trace: {trace:?}"
    )]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        trace: Vec<f64>,
    },

    /// A record failed validation against its documented invariants.
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration file or key could not be interpreted.
    #[error("config error: {0}")]
    Config(String),

    /// CSV input did not match the documented schema.
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
