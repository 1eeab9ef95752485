use std::fmt;
use std::path::Path;

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Data = 2,
    Backend = 3,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Command failure, classified by the exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl Error {
    pub fn status(&self) -> ExitStatus {
        match self {
            Error::Usage(_) => ExitStatus::Usage,
            Error::Data(_) => ExitStatus::Data,
            Error::Backend(_) => ExitStatus::Backend,
        }
    }

    pub fn data(path: &Path, err: impl fmt::Display) -> Self {
        Error::Data(format!("{}: {err}", path.display()))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
