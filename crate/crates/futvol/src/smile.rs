//! Affine-in-LMMR first-order implied-volatility expansion.
//!
//! At `t = 0`, the implied volatility of a `(T0, K)` option on a future
//! expiring at `T` is approximated by
//!
//! ```text
//! I ~= eta_bar b_bar + (V3_eps / eta_bar) b_eps + (V0_delta / eta_bar) b_delta
//!      + [ (V3_eps / eta_bar^3) a_eps + (V0_delta / eta_bar^3) a_delta ] LMMR,
//! ```
//!
//! with `LMMR = ln(K / F) / T0` and coefficient functions of `(T0, T, kappa)`
//! alone:
//!
//! ```text
//! b_bar   = lambda_sigma
//! b_eps   = (3/2) lambda_3 / lambda_sigma
//! b_delta = lambda_0 / lambda_sigma + (1/2) lambda_1 / lambda_sigma
//! a_eps   = lambda_3 / lambda_sigma^3
//! a_delta = lambda_1 / lambda_sigma^3
//! ```
//!
//! The smile predicted at first order is exactly affine in LMMR, which is
//! what makes the staged calibration a pair of linear regressions.

use crate::error::{FutVolError, Result};
use crate::pricing::GroupMarketParams;
use crate::weights::{weight_set, Tenor};

/// Implied volatilities at or below this level signal that the expansion,
/// not the data, has broken down.
pub const IV_CREDIBILITY_FLOOR: f64 = 0.005;

/// The five smile coefficient functions evaluated at one `(T0, T, kappa)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmileCoefficients {
    pub b_bar: f64,
    pub b_eps: f64,
    pub b_delta: f64,
    pub a_eps: f64,
    pub a_delta: f64,
}

/// One smile observation in the affine coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmmrPoint {
    /// Log-moneyness to maturity ratio `ln(K/F) / T0`, per year.
    pub lmmr: f64,
    pub iv: f64,
}

/// Log-moneyness-to-maturity ratio of a strike.
pub fn lmmr(strike: f64, future_price: f64, option_expiry: f64) -> f64 {
    (strike / future_price).ln() / option_expiry
}

/// Evaluates the coefficient functions at `t = 0`.
pub fn smile_coefficients(
    option_expiry: f64,
    future_expiry: f64,
    kappa: f64,
) -> Result<SmileCoefficients> {
    let tenor = Tenor::new(0.0, option_expiry, future_expiry)?;
    if option_expiry <= 0.0 {
        return Err(FutVolError::invalid("smile coefficients need T0 > 0"));
    }
    let w = weight_set(&tenor, kappa)?;
    let ls = w.lambda_sigma;
    let ls3 = ls * ls * ls;
    Ok(SmileCoefficients {
        b_bar: ls,
        b_eps: 1.5 * w.lambda3 / ls,
        b_delta: w.lambda0 / ls + 0.5 * w.lambda1 / ls,
        a_eps: w.lambda3 / ls3,
        a_delta: w.lambda1 / ls3,
    })
}

impl SmileCoefficients {
    /// Smile level at `LMMR = 0` for the given group parameters.
    pub fn level(&self, gmp: &GroupMarketParams) -> f64 {
        gmp.eta_bar * self.b_bar
            + gmp.v3_eps / gmp.eta_bar * self.b_eps
            + gmp.v0_delta / gmp.eta_bar * self.b_delta
    }

    /// Smile slope in the LMMR coordinate.
    pub fn slope(&self, gmp: &GroupMarketParams) -> f64 {
        let eta3 = gmp.eta_bar.powi(3);
        gmp.v3_eps / eta3 * self.a_eps + gmp.v0_delta / eta3 * self.a_delta
    }
}

/// First-order implied volatility at one LMMR point.
///
/// Fails with [`FutVolError::ExpansionBreakdown`] when the affine value dips
/// to or below [`IV_CREDIBILITY_FLOOR`]; the parameters are then outside the
/// asymptotic regime and clamping would hide it.
pub fn iv_approx(
    lmmr: f64,
    option_expiry: f64,
    future_expiry: f64,
    gmp: &GroupMarketParams,
) -> Result<f64> {
    let coeffs = smile_coefficients(option_expiry, future_expiry, gmp.kappa)?;
    let iv = coeffs.level(gmp) + coeffs.slope(gmp) * lmmr;
    if !iv.is_finite() || iv <= IV_CREDIBILITY_FLOOR {
        return Err(FutVolError::ExpansionBreakdown { implied_vol: iv });
    }
    Ok(iv)
}
