//! Experiment runner around `spdc-core`: config parsing, dataset and
//! artifact file formats, trial execution and CSV reporting.

pub mod config;
pub mod dataset;
pub mod experiment;

use thiserror::Error;

/// CLI-level failures, each mapped to a documented process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 1: the configuration is malformed or inconsistent.
    #[error("invalid config: {0}")]
    Config(String),

    /// Exit code 2: an input file is missing, unreadable or malformed.
    #[error("cannot read input: {0}")]
    Input(String),

    /// Exit code 3: a numerical stage failed (e.g. an indefinite Gram
    /// matrix broke the solver's factorization).
    #[error("numeric failure in {stage}: {message}")]
    Numeric {
        stage: &'static str,
        message: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numeric { .. } => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
