use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration; the binary exits with code 2.
    #[error("configuration error: {0}")]
    Config(String),

    /// An asserted audit or experiment check failed; exit code 1.
    #[error("assertion violated: {0}")]
    Violation(String),

    #[error(transparent)]
    Core(#[from] earl_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("training failure: {0}")]
    Training(String),
}

impl From<earl_learn::Error> for Error {
    fn from(e: earl_learn::Error) -> Self {
        match e {
            // Learner config rejections are configuration errors to the CLI.
            earl_learn::Error::Config(msg) => Error::Config(msg),
            other => Error::Training(other.to_string()),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl Error {
    /// 0 = success is never an error; 1 = assertion violation or runtime
    /// failure; 2 = configuration error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
