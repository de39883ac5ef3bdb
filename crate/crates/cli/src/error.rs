use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// The computation ran but its verdict is negative.
    #[error("{0}")]
    Failed(String),

    #[error(transparent)]
    Core(#[from] hdkde::Error),

    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Input { .. } => 2,
            Self::Core(e) => match e {
                hdkde::Error::Config(_)
                | hdkde::Error::InvalidParameter(_)
                | hdkde::Error::DimensionMismatch { .. }
                | hdkde::Error::OmegaLength { .. }
                | hdkde::Error::EmptySample => 2,
                _ => 1,
            },
            Self::Failed(_) | Self::Output { .. } | Self::Csv(_) | Self::Json(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
