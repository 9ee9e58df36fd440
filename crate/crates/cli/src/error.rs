use std::fmt;

use dmq_core::DmqError;
use serde::Serialize;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Error reported on stderr as a single JSON object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "usage",
            message: message.into(),
            exit_code: EXIT_USAGE,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: "data",
            message: message.into(),
            exit_code: EXIT_DATA,
        }
    }

    pub fn context(mut self, prefix: &str) -> Self {
        self.message = format!("{prefix}: {}", self.message);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error report serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DmqError> for CliError {
    fn from(e: DmqError) -> Self {
        let (kind, exit_code) = match &e {
            DmqError::InvalidArgument(_)
            | DmqError::InvalidParams(_)
            | DmqError::UnsupportedDimension(_)
            | DmqError::InvalidDirection(_) => ("usage", EXIT_USAGE),
            DmqError::DimensionMismatch { .. }
            | DmqError::NonPositiveThreshold { .. }
            | DmqError::DegenerateMoments { .. }
            | DmqError::NonPositiveGamma { .. }
            | DmqError::NeedsCentering { .. }
            | DmqError::Bootstrap(_) => ("assumption", EXIT_DATA),
            DmqError::Factorization { .. } | DmqError::Numerical(_) => ("numerical", EXIT_NUMERICAL),
        };
        Self {
            kind,
            message: e.to_string(),
            exit_code,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::data(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(format!("json: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
