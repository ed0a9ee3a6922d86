use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] multibump::Error),

    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    /// Process exit status: 2 for bad input, 1 for failed computations.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Toml(_) | CliError::Usage(_) => 2,
            CliError::Core(multibump::Error::Format(_) | multibump::Error::Precondition(_)) => 2,
            _ => 1,
        }
    }

    pub fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::File { path: path.display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
