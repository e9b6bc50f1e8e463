use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] earl_core::Error),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("training failure: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, Error>;
