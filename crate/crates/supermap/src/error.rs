use std::path::PathBuf;

use supermap_core::error::Error as CoreError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

/// Exit status of the command line tool. Unreadable or malformed inputs,
/// including MAPs that break the sign and row-sum rules, count as
/// configuration errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Ok = 0,
    Config = 2,
    Numerical = 3,
    Capacity = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad configuration, flags or input file contents.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file parsed but its contents are inconsistent (digest, version, shape).
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl AppError {
    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        AppError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn exit_kind(&self) -> ExitKind {
        match self {
            AppError::Config(_) | AppError::Format { .. } | AppError::Io { .. } => ExitKind::Config,
            AppError::Core(CoreError::Capacity { .. }) => ExitKind::Capacity,
            AppError::Core(CoreError::Structural(_) | CoreError::InvalidMap(_) | CoreError::Shape { .. }) => {
                ExitKind::Config
            }
            AppError::Core(_) => ExitKind::Numerical,
        }
    }
}
