use thiserror::Error;

/// Errors produced by the neuron, kernel, analysis and training routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violated its documented range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An input value is outside the domain of the function (NaN, negative, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Operand shapes do not conform.
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    /// A fixed-point value or accumulator would not fit its declared width.
    #[error("range error: {0}")]
    Range(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training fault at epoch {epoch}, batch {batch}: {detail}")]
    TrainingFault {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            expected,
            actual,
            context,
        });
    }
    Ok(())
}
