use thiserror::Error;

use crate::field::Shape;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a numeric domain requirement (non-finite, negative
    /// surprisal, probability outside (0, 1], ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in `{field}`: expected {expected}, found {found}")]
    ShapeMismatch {
        field: String,
        expected: Shape,
        found: Shape,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported condition for {denoiser}: {condition}")]
    UnsupportedCondition { denoiser: String, condition: String },

    #[error("non-finite integrand at alpha = {alpha}")]
    NonFiniteIntegrand { alpha: f64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("non-finite trajectory at step {step}")]
    NonFiniteTrajectory { step: usize },

    #[error("no prior registered for phrase {phrase:?} (context {context:?})")]
    MissingPrior {
        phrase: String,
        context: Option<String>,
    },

    #[error("zero-probability prior for phrase {0:?}")]
    ZeroProbability(String),

    #[error("bridge transport failure: {0}")]
    Transport(String),

    #[error("bridge returned shape {found}, expected {expected}")]
    BridgeShape { expected: Shape, found: Shape },

    #[error("bridge rejected request ({status}): {message}")]
    BridgeRejected { status: u16, message: String },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
