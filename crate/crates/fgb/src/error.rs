use thiserror::Error;

pub type AppResult<T> = Result<T, AppError>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Core(#[from] fgb_core::Error),
}

impl AppError {
    /// 1 for usage, configuration and file problems; 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        use fgb_core::Error as E;
        match self {
            AppError::Config(_) | AppError::Io(_) | AppError::ModelFile(_) => 1,
            AppError::Core(E::Parameter(_) | E::Shape(_) | E::Unsupported(_) | E::NoSampler(_)) => 1,
            AppError::Core(_) => 2,
        }
    }
}
