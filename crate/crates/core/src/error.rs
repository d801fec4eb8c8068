//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by the quantization, sharing, protocol and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A real value does not fit the fixed-point range of the ring.
    #[error("value {0} is outside the representable fixed-point range")]
    Range(f64),
    /// A structural parameter (share count, length, threshold) is invalid.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Input data contains NaN or infinite coordinates.
    #[error("invalid input: {0}")]
    Input(String),
    /// Two operands disagree in length or shape.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    /// A normalising denominator is zero.
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    /// Serialization or report output failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
