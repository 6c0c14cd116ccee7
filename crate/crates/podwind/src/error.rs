use std::io;
use std::path::{Path, PathBuf};

/// Errors of the file layer and the study harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] podwind_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    /// Bad configuration, flags or file layout.
    #[error("configuration: {0}")]
    Config(String),

    /// Malformed or invalid data in an input file.
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA_QUALITY: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn data(path: &Path, message: impl Into<String>) -> Self {
        Error::Data { path: path.to_path_buf(), message: message.into() }
    }

    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            Error::Core(e) if e.is_data_quality() => EXIT_DATA_QUALITY,
            Error::Data { .. } => EXIT_DATA_QUALITY,
            _ => EXIT_CONFIG,
        }
    }
}
