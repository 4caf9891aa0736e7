use brewflex_core::process::ProcessError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Io(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) => 2,
            AppError::Infeasible(_) => 3,
            AppError::Io(_) => 4,
        }
    }

    pub fn from_process(e: ProcessError) -> Self {
        let msg = e.to_string();
        match e.root() {
            ProcessError::UndersizedPlant { .. } | ProcessError::Plan { .. } => AppError::Infeasible(msg),
            _ => AppError::Validation(msg),
        }
    }

    pub fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        AppError::Io(format!("{context}: {e}"))
    }
}
