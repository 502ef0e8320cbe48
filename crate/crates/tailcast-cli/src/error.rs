//! CLI error type carrying the process exit code.
//!
//! Codes: 0 success, 2 I/O, 3 insufficient data, 4 config/model mismatch,
//! 5 numerical failure.

use tailcast::Error as LibError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("insufficient data: {0}")]
    Data(String),
    #[error("config/model mismatch: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Data(_) => 3,
            CliError::Config(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }
}

impl From<LibError> for CliError {
    fn from(e: LibError) -> Self {
        match &e {
            LibError::Io(_) | LibError::Csv(_) | LibError::Json(_) => CliError::Io(e.to_string()),
            LibError::NoCommonRecords
            | LibError::DuplicateTimestamp { .. }
            | LibError::DegenerateSplit
            | LibError::InsufficientData { .. }
            | LibError::TooFewExceedances { .. }
            | LibError::TooFewUncensored { .. }
            | LibError::MissingTarget => CliError::Data(e.to_string()),
            LibError::ModelMismatch(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        match &e {
            crate::config::ConfigError::Unreadable { .. } => CliError::Io(e.to_string()),
            crate::config::ConfigError::Invalid(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
