use std::path::PathBuf;

/// Errors raised across the crate.
///
/// The variants map onto the command-line exit codes: parameter and format
/// problems are usage errors, numeric failures are reported separately, and
/// filesystem failures are I/O errors.
#[derive(Debug, thiserror::Error)]
pub enum PhriError {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PhriError {
    pub fn param(msg: impl Into<String>) -> Self {
        PhriError::Parameter(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        PhriError::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PhriError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        PhriError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            PhriError::Parameter(_) | PhriError::Format { .. } => 1,
            PhriError::Numeric(_) => 2,
            PhriError::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, PhriError>;
