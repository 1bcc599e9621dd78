//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by model construction, evaluators, and the identification
/// engine.
///
/// Cell-level failures carry a formatted description of the offending
/// conditioning cell so that callers (and bootstrap failure reports) can name
/// exactly which probability was not computable.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A conditioning event has zero or insufficient mass for the backend.
    #[error("unreachable cell: {0}")]
    UnreachableCell(String),

    /// The instrument does not move the propensity in a cell where the sign
    /// construction needs it to.
    #[error("irrelevant instrument: {0}")]
    IrrelevantInstrument(String),

    /// No covariate value matches the required index level within tolerance.
    #[error("no match: {0}")]
    NoMatch(String),

    /// A ratio's denominator is below the configured floor.
    #[error("degenerate conditioning: {0}")]
    DegenerateConditioning(String),

    /// The latent specification (or horizon) is outside what a backend supports.
    #[error("unsupported latent specification: {0}")]
    UnsupportedLatent(String),

    /// Too many bootstrap replicates failed to produce an estimate.
    #[error("too many bootstrap failures: {failed} of {total} replicates")]
    TooManyFailures { failed: usize, total: usize },

    /// The model failed validation; run `validate_model` for the full list.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A query or configuration is inconsistent with the model (lengths,
    /// grid ranges, regime masks, and the like).
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    /// Numerical failure (non-PD correlation matrix, quadrature setup).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// I/O or serialization failure, carried as text to keep `Error: Clone`.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
