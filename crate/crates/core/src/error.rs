use thiserror::Error;

use crate::types::Family;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at channel {channel}, point {point}")]
    NonFinite { channel: usize, point: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("IC latent vector has length {got}, generator expects {expected}")]
    IcDimension { expected: usize, got: usize },

    #[error("initial condition violates positivity: {0}")]
    Positivity(String),

    #[error("solver blew up before frame {frame}")]
    BlowUp { frame: usize },

    #[error("solver exceeded the internal step cap of {cap}")]
    StepCap { cap: usize },

    #[error("non-positive {quantity} at internal step {step}")]
    NegativeState { quantity: &'static str, step: usize },

    #[error("expected {expected:?} data, got {got:?}")]
    FamilyMismatch { expected: Family, got: Family },

    #[error("singular normal matrix for mode {mode}; use a nonzero ridge strength")]
    Singular { mode: usize },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("rollout produced non-finite values at step {step}")]
    RolloutBlowUp { step: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("cannot select {k} candidates from a pool of {pool}")]
    BatchTooLarge { k: usize, pool: usize },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
