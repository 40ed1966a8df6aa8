use std::path::PathBuf;

use thiserror::Error;

/// Exit code for a run whose checks all passed.
pub const EXIT_PASS: u8 = 0;
/// Exit code for bad arguments or configuration.
pub const EXIT_USAGE: u8 = 1;
/// Exit code for solver failures and failed checks.
pub const EXIT_NUMERICAL: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: at `{field}`: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Invalid(ermakov::Error),

    #[error("numerical failure: {0}")]
    Numerical(ermakov::Error),

    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

pub(crate) trait NumericalContext<T> {
    /// Tags a core error raised while computing.
    fn numerical(self) -> Result<T, CliError>;
    /// Tags a core error raised while validating inputs.
    fn invalid(self) -> Result<T, CliError>;
}

impl<T> NumericalContext<T> for ermakov::Result<T> {
    fn numerical(self) -> Result<T, CliError> {
        self.map_err(CliError::Numerical)
    }
    fn invalid(self) -> Result<T, CliError> {
        self.map_err(CliError::Invalid)
    }
}
