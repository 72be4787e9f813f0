use std::path::PathBuf;

use dcpo_core::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Lab(#[from] LabError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A certificate or acceptance check did not hold.
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl HarnessError {
    pub fn usage(msg: impl Into<String>) -> Self {
        HarnessError::Lab(LabError::Usage(msg.into()))
    }

    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Lab(LabError::Config(msg.into()))
    }

    /// 1 for failed checks and runs that went numerically wrong, 2 for
    /// everything the caller can fix by changing the invocation.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::CheckFailed(_) | HarnessError::Lab(LabError::Divergence { .. } | LabError::Numeric(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
