use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum SnsError {
    #[error("zero wavevector is not an active mode")]
    ZeroWaveVector,

    #[error("negative time {0} passed to the heat semigroup")]
    NegativeTime(f64),

    #[error("fields live on different mode sets")]
    ModeSetMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("numeric abort: {0}")]
    NumericAbort(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

impl SnsError {
    pub fn invalid(name: &str, reason: impl Into<String>) -> Self {
        SnsError::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SnsError>;
