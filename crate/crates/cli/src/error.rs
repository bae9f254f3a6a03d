use std::path::PathBuf;

use spider_core::SpiderError;

/// Failures of the harness, split by the exit code they map to.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Invalid configuration; `field` is the dotted key or flag at fault.
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },
    /// An optimizer or referee rejected its input.
    #[error("{context}: {source}")]
    Run {
        context: String,
        #[source]
        source: SpiderError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
    /// Some cells of an otherwise valid experiment did not succeed.
    #[error("{0}")]
    Incomplete(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config { .. } => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        let path = path.into();
        match source.into_kind() {
            csv::ErrorKind::Io(e) => HarnessError::Io { path, source: e },
            other => HarnessError::Malformed {
                path,
                message: format!("{other:?}"),
            },
        }
    }
}
