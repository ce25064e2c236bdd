//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, FutVolError>;

/// Errors produced by pricing, calibration and simulation routines.
#[derive(Debug, Error)]
pub enum FutVolError {
    /// An input violated a domain precondition (non-finite value, wrong sign,
    /// tenor ordering, ...).
    #[error("invalid input: {message}")]
    InvalidInput { message: String },

    /// A target option price lies outside the open no-arbitrage band, so no
    /// implied volatility exists.
    #[error("price {price} outside the open no-arbitrage band ({lower}, {upper})")]
    PriceOutOfBand { price: f64, lower: f64, upper: f64 },

    /// An iterative solver stopped before reaching its tolerance. The best
    /// iterate found so far is attached.
    #[error("no convergence: {message} (best iterate {best})")]
    NoConvergence { message: String, best: f64 },

    /// The first-order expansion produced a volatility at or below the
    /// credibility floor; the parameters are outside the asymptotic regime.
    #[error("expansion breakdown: implied volatility {implied_vol} is at or below the credibility floor")]
    ExpansionBreakdown { implied_vol: f64 },

    /// Regression design matrix is singular or numerically collinear.
    #[error("collinear design: {message}")]
    Collinearity { message: String },

    /// A calibration stage ended on a diagnostic failure (parameter at a
    /// bound, no interior minimum, too few usable smiles).
    #[error("calibration diagnostic: {message}")]
    Diagnostic { message: String },

    /// A quadrature did not converge under node doubling.
    #[error("quadrature did not converge: {message}")]
    Quadrature { message: String },

    /// The requested time grid does not resolve the fast scale.
    #[error(
        "step resolution: {n_steps} steps do not resolve the fast scale, need at least {required}"
    )]
    StepResolution { n_steps: usize, required: usize },

    /// A market-data file failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// No quotes survived validation and filtering.
    #[error("empty panel: no usable quotes after validation")]
    EmptyPanel,

    /// Filesystem error while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl FutVolError {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        FutVolError::InvalidInput {
            message: message.into(),
        }
    }
}

/// Checks that a value is finite and strictly positive.
pub(crate) fn ensure_positive(value: f64, name: &str) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(FutVolError::invalid(format!(
            "{name} must be finite and > 0, got {value}"
        )));
    }
    Ok(())
}

/// Checks that a value is finite.
pub(crate) fn ensure_finite(value: f64, name: &str) -> Result<()> {
    if !value.is_finite() {
        return Err(FutVolError::invalid(format!(
            "{name} must be finite, got {value}"
        )));
    }
    Ok(())
}
