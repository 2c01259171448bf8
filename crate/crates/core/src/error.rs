use thiserror::Error;

/// Errors raised across the engine.
#[derive(Debug, Error)]
pub enum BimaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("numerical rank deficiency: {0}")]
    NumericalRank(String),

    #[error("identifiability: {0}")]
    Identifiability(String),

    #[error("initialization failed: {0}")]
    InitializationFailed(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("chain diverged: {0}")]
    Diverged(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BimaError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(BimaError::InvalidArgument(msg.into()))
}
