use fcs_heom_core::Error as CoreError;
use thiserror::Error;

/// Failures of a run, each mapped to a process exit status.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl AppError {
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::Validation { .. } | CoreError::Domain(_) | CoreError::Unsupported(_) => {
                AppError::Validation(e.to_string())
            }
            CoreError::Grid(_) | CoreError::Mode(_) | CoreError::Order { .. } => AppError::Other(e.to_string()),
            _ => AppError::Numerical(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Parse(_) => 2,
            AppError::Validation(_) => 3,
            AppError::Numerical(_) => 4,
            AppError::NotConverged(_) => 5,
            AppError::Io(_) | AppError::Other(_) => 1,
        }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        AppError::from_core(e)
    }
}
