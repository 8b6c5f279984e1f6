use thiserror::Error;

/// Errors produced by the simulation, equalizer and training code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("non-finite sample at step {step}: {context}")]
    NumericOverflow { step: usize, context: String },

    #[error("quadrature did not converge: estimated error {estimate:.3e} above tolerance {tolerance:.3e} ({context})")]
    Accuracy {
        estimate: f64,
        tolerance: f64,
        context: String,
    },

    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient for parameter {param} (step {step})")]
    NonFiniteGradient { step: usize, param: usize },

    #[error("training diverged at epoch {epoch}: loss {loss:.4e} exceeded 10x initial {initial:.4e}")]
    Diverged { epoch: usize, loss: f64, initial: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
