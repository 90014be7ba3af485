use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed file at byte {offset}: {msg}")]
    Format { path: PathBuf, offset: u64, msg: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Core(#[from] cppg_core::Error),
    /// Bad user input detected before any work starts.
    #[error("{0}")]
    Usage(String),
    #[error("incompatible checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn format(path: &Path, offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), offset, msg: msg.into() }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        Error::Json { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        Error::Csv { path: path.to_path_buf(), source }
    }

    /// Process exit code: 2 for invalid input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Checkpoint { .. } => 2,
            Error::Core(cppg_core::Error::Config(_)) | Error::Core(cppg_core::Error::InvalidArgument(_)) => 2,
            _ => 1,
        }
    }
}
