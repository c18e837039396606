//! Crate-wide error type.

use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// A vector or parameter block has the wrong length.
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A value that must be finite is NaN or infinite.
    NonFinite { what: &'static str },
    /// A parameter or precondition check failed.
    Invalid { what: &'static str },
    /// An episode was aborted because the environment produced a
    /// non-finite state at the given step.
    EpisodeAborted { step: usize },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::DimMismatch {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, got {got}"),
            CoreError::NonFinite { what } => write!(f, "non-finite value in {what}"),
            CoreError::Invalid { what } => write!(f, "invalid parameter: {what}"),
            CoreError::EpisodeAborted { step } => {
                write!(f, "episode aborted: non-finite state after step {step}")
            }
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
