use std::path::PathBuf;

use anderson_core::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("invalid spec key `{key}`: {reason}")]
    Spec { key: String, reason: String },

    #[error(transparent)]
    Core(#[from] anderson_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),

    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl LabError {
    pub fn spec(key: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Spec { key: key.into(), reason: reason.into() }
    }

    /// CLI exit code: 2 validation, 3 resource guard, 4 numerical failure,
    /// 1 for I/O and everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Spec { .. } | LabError::Json(_) => 2,
            LabError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::ResourceGuard => 3,
                ErrorKind::Numerical => 4,
            },
            LabError::Io { .. } | LabError::Csv(_) | LabError::Pool(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
