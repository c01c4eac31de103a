use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum KidsError {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data could not be parsed.
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// A numerical failure inside inference (non-PD scale, total underflow, ...).
    #[error("numerical failure{}: {message}", .step.map(|k| format!(" at step {k}")).unwrap_or_default())]
    Numerical { step: Option<usize>, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl KidsError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KidsError::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        KidsError::Numerical {
            step: None,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KidsError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        KidsError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Attach a time-step index to a numerical error.
    pub fn at_step(self, k: usize) -> Self {
        match self {
            KidsError::Numerical { message, .. } => KidsError::Numerical {
                step: Some(k),
                message,
            },
            other => other,
        }
    }

    /// Process exit code: 1 config/parse, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            KidsError::InvalidInput(_) | KidsError::Config(_) | KidsError::Parse { .. } => 1,
            KidsError::Numerical { .. } => 2,
            KidsError::Io { .. } => 3,
        }
    }
}

pub type Result<T, E = KidsError> = std::result::Result<T, E>;
