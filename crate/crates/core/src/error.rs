use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("Fock truncation too small: {0}")]
    Truncation(String),
    #[error("step size rejected: {0}")]
    StepSize(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error("cannot condition on outcome: {0}")]
    Conditioning(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
