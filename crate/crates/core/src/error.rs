use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or configuration value is outside its valid range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Not enough included users (or rows) to compute the requested quantity.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The closed form does not cover the requested regime.
    #[error("closed form unavailable for {0}; use the enumeration oracle or Monte Carlo")]
    ClosedFormUnavailable(String),

    /// Exhaustive enumeration was requested for a calendar that is too long.
    #[error("enumeration over 2^{k} activity patterns refused (k > {max}); use Monte Carlo")]
    EnumerationTooLarge { k: u32, max: u32 },

    /// Input rows could not be parsed or failed validation.
    #[error("invalid data: {0}")]
    Data(String),

    /// Reading or writing a file failed.
    #[error("i/o error: {0}")]
    Io(String),

    /// An internal invariant was violated. Indicates a bug, not bad input.
    #[error("internal contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;
