use std::path::Path;

use thiserror::Error;

/// A failed command, classified by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration. Exit status 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input data. Exit status 2.
    #[error("{0}")]
    Data(String),
    /// A computation produced a non-finite value. Exit status 3.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<cpdetect::Error> for CliError {
    fn from(e: cpdetect::Error) -> Self {
        use cpdetect::Error as E;
        let msg = e.to_string();
        match e {
            E::NonFinite(_) => CliError::Numeric(msg),
            E::InvalidConfig(_)
            | E::CalibrationMismatch { .. }
            | E::EmptyCandidateSet { .. }
            | E::ProbabilityOutOfRange(_)
            | E::InsufficientSimulations { .. } => CliError::Usage(msg),
            _ => CliError::Data(msg),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
