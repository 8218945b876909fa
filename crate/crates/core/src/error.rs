// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

/// Errors raised by the library. Variants map onto CLI exit codes:
/// `NumericFailure` is a numerical problem, everything else is a usage problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("component of size {size} exceeds cap {cap}")]
    ComponentTooLarge { size: usize, cap: usize },
    #[error("no signal detected")]
    NoSignalDetected,
    #[error("io error: {0}")]
    Io(String),
}

impl CaseError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, CaseError::NumericFailure(_))
    }
}

impl From<std::io::Error> for CaseError {
    fn from(e: std::io::Error) -> Self {
        CaseError::Io(e.to_string())
    }
}

impl From<csv::Error> for CaseError {
    fn from(e: csv::Error) -> Self {
        CaseError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CaseError>;
