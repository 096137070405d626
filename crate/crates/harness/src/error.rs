use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ac_core::Error),

    #[error("run aborted: {0}")]
    Aborted(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
}

impl HarnessError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn data(path: &Path, message: impl Into<String>) -> Self {
        HarnessError::Data {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 configuration, 2 runtime abort, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Core(ac_core::Error::Config(_) | ac_core::Error::Parse(_)) => 1,
            HarnessError::Core(_) | HarnessError::Aborted(_) => 2,
            HarnessError::Io { .. } | HarnessError::Data { .. } => 3,
        }
    }
}
