use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed report: {0}")]
    Report(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] gw_core::Error),
}

impl CliError {
    pub fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status: 2 for statistical degeneracy, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_degeneracy() => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
