use std::path::PathBuf;

use seqnas_search::SearchError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Search(#[from] SearchError),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid arguments: {0}")]
    Usage(String),
}

impl From<seqnas_core::Error> for CliError {
    fn from(e: seqnas_core::Error) -> Self {
        CliError::Search(e.into())
    }
}

impl From<seqnas_neural::NeuralError> for CliError {
    fn from(e: seqnas_neural::NeuralError) -> Self {
        CliError::Search(e.into())
    }
}

impl CliError {
    /// 2 for bad arguments, configuration or space (including a missing
    /// config file), 3 for an infeasible budget, 4 for divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Search(e) => e.exit_code(),
            CliError::File { .. } | CliError::Usage(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
