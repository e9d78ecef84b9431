use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rdsurv::Error),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Short machine-readable category printed with every error.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) if e.is_numeric() => "numeric",
            CliError::Core(rdsurv::Error::Io(_) | rdsurv::Error::Csv(_)) | CliError::Io(_) | CliError::Json(_) => "io",
            CliError::Core(_) => "validation",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> u8 {
        if self.code() == "numeric" {
            2
        } else {
            1
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
