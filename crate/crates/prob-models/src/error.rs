use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProbError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Nn(#[from] nn_core::NnError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
