use thiserror::Error;

/// Errors raised by the estimation pipeline.
///
/// Each variant maps onto one class of failure so that front ends can turn
/// them into distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain of a formula (zero divisor, vacuous bound, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs have incompatible lengths or required columns are absent.
    #[error("shape error: {0}")]
    Shape(String),

    /// A configuration value violates its invariants.
    #[error("config error: {field}: {message}")]
    Config { field: String, message: String },

    /// Malformed input file contents.
    #[error("format error: {0}")]
    Format(String),

    /// Two series share no common days.
    #[error("range error: {0}")]
    Range(String),

    /// The smoothing threshold has a non-positive denominator at this window,
    /// so smoothing is not provably beneficial.
    #[error("infeasible window: {0}")]
    InfeasibleWindow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
