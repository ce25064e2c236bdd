//! First-order option-price approximation on a future:
//! `P ~= P0 + P10_eps + P01_delta`.
//!
//! `P0` is the Black price at the time-averaged volatility
//! `sigma_bar = eta_bar * lambda_sigma`. The two corrections are Greek
//! multiples of that same Black price,
//!
//! ```text
//! P10_eps   = (T0 - t) lambda_3 V3_eps (D_2 + D_1 D_2) P_B,
//! P01_delta = (T0 - t) V0_delta (lambda_0 D_2 + lambda_1 D_1 D_2) P_B,
//! ```
//!
//! evaluated through the vega relations of [`crate::black76`] rather than
//! finite differences. Everything is driven by the four group market
//! parameters; the slow-factor level never appears explicitly.

use crate::black76::{BlackInputs, OptionStyle};
use crate::error::{ensure_finite, ensure_positive, FutVolError, Result};
use crate::weights::{sigma_bar, weight_set, Tenor};

/// The calibration target: mean-reversion speed, effective volatility and
/// the two small scaled correction coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMarketParams {
    pub kappa: f64,
    pub eta_bar: f64,
    /// sqrt(eps)-scaled fast-factor coefficient.
    pub v3_eps: f64,
    /// sqrt(delta)-scaled slow-factor coefficient.
    pub v0_delta: f64,
}

impl GroupMarketParams {
    pub fn new(kappa: f64, eta_bar: f64, v3_eps: f64, v0_delta: f64) -> Result<Self> {
        ensure_positive(kappa, "kappa")?;
        ensure_positive(eta_bar, "eta_bar")?;
        ensure_finite(v3_eps, "v3_eps")?;
        ensure_finite(v0_delta, "v0_delta")?;
        Ok(GroupMarketParams {
            kappa,
            eta_bar,
            v3_eps,
            v0_delta,
        })
    }

    /// The expansion is credible while the corrections stay small against
    /// `eta_bar^3`. Callers should warn, not reject, when this is false.
    pub fn expansion_credible(&self) -> bool {
        let bound = 0.5 * self.eta_bar.powi(3);
        self.v3_eps.abs() <= bound && self.v0_delta.abs() <= bound
    }
}

/// European vanilla on a future: style, strike, option expiry `T0`, expiry
/// `T >= T0` of the underlying future, and the flat rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanillaSpec {
    pub style: OptionStyle,
    pub strike: f64,
    pub option_expiry: f64,
    pub future_expiry: f64,
    pub rate: f64,
}

impl VanillaSpec {
    pub fn new(
        style: OptionStyle,
        strike: f64,
        option_expiry: f64,
        future_expiry: f64,
        rate: f64,
    ) -> Result<Self> {
        ensure_positive(strike, "strike")?;
        ensure_positive(option_expiry, "option_expiry")?;
        ensure_finite(rate, "rate")?;
        if !future_expiry.is_finite() || option_expiry > future_expiry {
            return Err(FutVolError::invalid(format!(
                "need 0 < T0 <= T, got T0={option_expiry}, T={future_expiry}"
            )));
        }
        Ok(VanillaSpec {
            style,
            strike,
            option_expiry,
            future_expiry,
            rate,
        })
    }
}

/// The three price components and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceBreakdown {
    pub p0: f64,
    pub p10_eps: f64,
    pub p01_delta: f64,
    pub total: f64,
}

fn black_at_sigma_bar(
    future_price: f64,
    vanilla: &VanillaSpec,
    gmp: &GroupMarketParams,
    t: f64,
) -> Result<(BlackInputs, Tenor)> {
    let tenor = Tenor::new(t, vanilla.option_expiry, vanilla.future_expiry)?;
    if tenor.years_to_option() <= 0.0 {
        return Err(FutVolError::invalid(
            "pricing requires t < T0 (the option must not have expired)",
        ));
    }
    let vol = sigma_bar(&tenor, gmp.kappa, gmp.eta_bar)?;
    let inputs = BlackInputs::new(
        future_price,
        vanilla.strike,
        vol,
        tenor.years_to_option(),
        vanilla.rate,
    )?;
    Ok((inputs, tenor))
}

/// Leading term: the Black price at `sigma_bar`.
pub fn price_p0(
    future_price: f64,
    vanilla: &VanillaSpec,
    gmp: &GroupMarketParams,
    t: f64,
) -> Result<f64> {
    let (inputs, _) = black_at_sigma_bar(future_price, vanilla, gmp, t)?;
    Ok(inputs.price(vanilla.style))
}

/// Fast-factor correction `(T0 - t) lambda_3 V3_eps (D_2 + D_1 D_2) P_B`.
pub fn price_correction_eps(
    future_price: f64,
    vanilla: &VanillaSpec,
    gmp: &GroupMarketParams,
    t: f64,
) -> Result<f64> {
    let (inputs, tenor) = black_at_sigma_bar(future_price, vanilla, gmp, t)?;
    let weights = weight_set(&tenor, gmp.kappa)?;
    let ops = inputs.d2_operator()? + inputs.d1d2_operator()?;
    Ok(tenor.years_to_option() * weights.lambda3 * gmp.v3_eps * ops)
}

/// Slow-factor correction
/// `(T0 - t) V0_delta (lambda_0 D_2 + lambda_1 D_1 D_2) P_B`.
pub fn price_correction_delta(
    future_price: f64,
    vanilla: &VanillaSpec,
    gmp: &GroupMarketParams,
    t: f64,
) -> Result<f64> {
    let (inputs, tenor) = black_at_sigma_bar(future_price, vanilla, gmp, t)?;
    let weights = weight_set(&tenor, gmp.kappa)?;
    let ops = weights.lambda0 * inputs.d2_operator()? + weights.lambda1 * inputs.d1d2_operator()?;
    Ok(tenor.years_to_option() * gmp.v0_delta * ops)
}

/// Full first-order price with its component breakdown.
pub fn price_total(
    future_price: f64,
    vanilla: &VanillaSpec,
    gmp: &GroupMarketParams,
    t: f64,
) -> Result<PriceBreakdown> {
    let (inputs, tenor) = black_at_sigma_bar(future_price, vanilla, gmp, t)?;
    let weights = weight_set(&tenor, gmp.kappa)?;
    let d2 = inputs.d2_operator()?;
    let d1d2 = inputs.d1d2_operator()?;
    let span = tenor.years_to_option();
    let p0 = inputs.price(vanilla.style);
    let p10_eps = span * weights.lambda3 * gmp.v3_eps * (d2 + d1d2);
    let p01_delta = span * gmp.v0_delta * (weights.lambda0 * d2 + weights.lambda1 * d1d2);
    Ok(PriceBreakdown {
        p0,
        p10_eps,
        p01_delta,
        total: p0 + p10_eps + p01_delta,
    })
}
