//! Command-line laboratory on top of `perpetual-core`: file formats, a thread
//! pool path runner, run records and plots.

pub mod cli;
pub mod config;
pub mod plot;
pub mod record;
pub mod runner;

use perpetual_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("io: {0}")]
    Io(String),
    #[error("statistical check failed: {0}")]
    Statistical(String),
}

impl LabError {
    /// 1 for bad input, 2 for resources, 3 for a failed check under `--strict`.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::Config(_) => 1,
            LabError::Core(Error::Argument(_) | Error::Domain { .. }) => 1,
            LabError::Core(_) | LabError::Io(_) => 2,
            LabError::Statistical(_) => 3,
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}
