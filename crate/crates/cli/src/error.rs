use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] msboost::Error),

    #[error("cannot write '{path}': {source}")]
    Write { path: String, source: std::io::Error },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
