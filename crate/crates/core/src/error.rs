use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix that must be symmetric positive definite could not be factorized,
    /// even after the jitter retries.
    #[error("singular matrix in {context}")]
    Singular { context: String },

    #[error("simulation diverged at step {step} (|state| = {magnitude:.3e})")]
    Divergence { step: usize, magnitude: f64 },

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("sampler diagnostic: {0}")]
    Sampler(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("unknown experiment setup `{0}`")]
    UnknownSetup(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn singular(context: impl Into<String>) -> Self {
        Error::Singular {
            context: context.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
