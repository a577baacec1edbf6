use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] amacer_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: byte {offset}: {message}", path.display())]
    Format { path: PathBuf, offset: u64, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 1 for bad input or usage, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if e.is_validation() => 1,
            Error::Core(_) | Error::Io { .. } => 2,
            Error::Parse { .. } | Error::Format { .. } | Error::Usage(_) | Error::Validation(_) => 1,
        }
    }
}
