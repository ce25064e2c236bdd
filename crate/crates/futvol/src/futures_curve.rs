//! First-order future-price curve on the mean-reverting spot and its
//! closed-form inversion.
//!
//! The leading term of the curve is
//!
//! ```text
//! h0(t, u, T) = exp{ s(T) + m + (u - m) e^(-kappa (T-t))
//!                    + eta_bar^2 / (4 kappa) (1 - e^(-2 kappa (T-t))) },
//! ```
//!
//! the future price of the exp-OU spot at constant effective volatility
//! `eta_bar` when the log-state is `u`. The fast and slow volatility factors
//! shift the curve by
//!
//! ```text
//! h10 = g(t,T) V3 e^(-3 kappa (T-t)) h0,    g(t,T) = (e^(-3 kappa (T-t)) - 1) / (3 kappa),
//! h01 = f(t,T) V1 e^(-3 kappa (T-t)) h0,
//! f(t,T) = (e^(3 kappa (T-t)) - e^(2 kappa (T-t))) / (2 kappa^2) - (e^(3 kappa (T-t)) - 1) / (6 kappa^2),
//! ```
//!
//! where `V3` and `V1` are stored already scaled by sqrt(eps) and
//! sqrt(delta). Inverting the curve to first order gives `H0 = h0^{-1}` in
//! closed form plus the state-independent shifts
//! `H10 = -g V3 e^(-2 kappa (T-t))` and `H01 = -f V1 e^(-2 kappa (T-t))`.

use std::fmt;
use std::sync::Arc;

use crate::error::{ensure_finite, ensure_positive, FutVolError, Result};

/// Deterministic seasonality hook `t -> s(t)`; defaults to identically zero.
#[derive(Clone, Default)]
pub enum Seasonality {
    #[default]
    None,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Seasonality {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Seasonality::None => 0.0,
            Seasonality::Custom(f) => f(t),
        }
    }
}

impl fmt::Debug for Seasonality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Seasonality::None => write!(f, "Seasonality::None"),
            Seasonality::Custom(_) => write!(f, "Seasonality::Custom(..)"),
        }
    }
}

/// Spot dynamics entering the futures curve: mean-reversion speed, long-run
/// log level, effective volatility and the two scaled correction scalars.
#[derive(Debug, Clone)]
pub struct SpotDynamicsParams {
    kappa: f64,
    long_run_mean: f64,
    eta_bar: f64,
    v3: f64,
    v1: f64,
    seasonality: Seasonality,
}

impl SpotDynamicsParams {
    /// `kappa > 0`, `eta_bar >= 0` (zero gives the deterministic forecast),
    /// corrections finite.
    pub fn new(kappa: f64, long_run_mean: f64, eta_bar: f64, v3: f64, v1: f64) -> Result<Self> {
        ensure_positive(kappa, "kappa")?;
        ensure_finite(long_run_mean, "long_run_mean")?;
        if !eta_bar.is_finite() || eta_bar < 0.0 {
            return Err(FutVolError::invalid(format!(
                "eta_bar must be finite and >= 0, got {eta_bar}"
            )));
        }
        ensure_finite(v3, "v3")?;
        ensure_finite(v1, "v1")?;
        Ok(SpotDynamicsParams {
            kappa,
            long_run_mean,
            eta_bar,
            v3,
            v1,
            seasonality: Seasonality::None,
        })
    }

    /// Replaces the default zero seasonality.
    pub fn with_seasonality(mut self, seasonality: Seasonality) -> Self {
        self.seasonality = seasonality;
        self
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn long_run_mean(&self) -> f64 {
        self.long_run_mean
    }

    pub fn eta_bar(&self) -> f64 {
        self.eta_bar
    }

    pub fn v3(&self) -> f64 {
        self.v3
    }

    pub fn v1(&self) -> f64 {
        self.v1
    }

    pub fn seasonality(&self) -> &Seasonality {
        &self.seasonality
    }

    fn check_horizon(&self, t: f64, future_expiry: f64) -> Result<f64> {
        ensure_finite(t, "t")?;
        ensure_finite(future_expiry, "future expiry")?;
        if t > future_expiry {
            return Err(FutVolError::invalid(format!(
                "valuation time {t} is after future expiry {future_expiry}"
            )));
        }
        Ok(future_expiry - t)
    }
}

/// One point of the first-order curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuturesPoint {
    pub t: f64,
    pub future_expiry: f64,
    /// Log-deseasonalized spot state `u`.
    pub state: f64,
    /// First-order future price `h0 + h10 + h01`.
    pub price: f64,
}

/// Leading-order future price `h0(t, u, T)`.
pub fn h0(params: &SpotDynamicsParams, t: f64, state: f64, future_expiry: f64) -> Result<f64> {
    let tau = params.check_horizon(t, future_expiry)?;
    ensure_finite(state, "state")?;
    let decay = (-params.kappa * tau).exp();
    let var_term = params.eta_bar * params.eta_bar / (4.0 * params.kappa) * (1.0 - decay * decay);
    Ok((params.seasonality.at(future_expiry)
        + params.long_run_mean
        + (state - params.long_run_mean) * decay
        + var_term)
        .exp())
}

/// `g(t,T) e^(-3 kappa (T-t))`, evaluated in a form with no large
/// exponentials: `(e^(-6 kappa (T-t)) - e^(-3 kappa (T-t))) / (3 kappa)`.
fn g_damped(kappa: f64, tau: f64) -> f64 {
    let e3 = (-3.0 * kappa * tau).exp();
    (e3 * e3 - e3) / (3.0 * kappa)
}

/// `f(t,T) e^(-3 kappa (T-t))`, likewise overflow-free:
/// `(1 - e^(-kappa (T-t))) / (2 kappa^2) - (1 - e^(-3 kappa (T-t))) / (6 kappa^2)`.
fn f_damped(kappa: f64, tau: f64) -> f64 {
    let k2 = kappa * kappa;
    -f64::exp_m1(-kappa * tau) / (2.0 * k2) + f64::exp_m1(-3.0 * kappa * tau) / (6.0 * k2)
}

/// Fast- and slow-factor corrections `(h10, h01)` to the future price.
pub fn h_corrections(
    params: &SpotDynamicsParams,
    t: f64,
    state: f64,
    future_expiry: f64,
) -> Result<(f64, f64)> {
    let tau = params.check_horizon(t, future_expiry)?;
    let base = h0(params, t, state, future_expiry)?;
    let h10 = g_damped(params.kappa, tau) * params.v3 * base;
    let h01 = f_damped(params.kappa, tau) * params.v1 * base;
    Ok((h10, h01))
}

/// First-order curve point `h0 + h10 + h01`.
pub fn first_order_point(
    params: &SpotDynamicsParams,
    t: f64,
    state: f64,
    future_expiry: f64,
) -> Result<FuturesPoint> {
    let base = h0(params, t, state, future_expiry)?;
    let (h10, h01) = h_corrections(params, t, state, future_expiry)?;
    Ok(FuturesPoint {
        t,
        future_expiry,
        state,
        price: base + h10 + h01,
    })
}

/// Closed-form inverse of `h0` in the state variable:
/// `H0(t, x, T) = m + e^(kappa (T-t)) (ln x - s(T) - m - eta_bar^2/(4 kappa)(1 - e^(-2 kappa (T-t))))`.
pub fn invert_h0(
    params: &SpotDynamicsParams,
    t: f64,
    price: f64,
    future_expiry: f64,
) -> Result<f64> {
    let tau = params.check_horizon(t, future_expiry)?;
    ensure_positive(price, "price")?;
    let decay = (-params.kappa * tau).exp();
    let var_term = params.eta_bar * params.eta_bar / (4.0 * params.kappa) * (1.0 - decay * decay);
    Ok(params.long_run_mean
        + (price.ln() - params.seasonality.at(future_expiry) - params.long_run_mean - var_term)
            / decay)
}

/// First-order corrections `(H10, H01)` of the inverse map. Both are
/// independent of the price argument:
/// `H10 = -g(t,T) V3 e^(-2 kappa (T-t))`, `H01 = -f(t,T) V1 e^(-2 kappa (T-t))`.
pub fn inversion_corrections(
    params: &SpotDynamicsParams,
    t: f64,
    future_expiry: f64,
) -> Result<(f64, f64)> {
    let tau = params.check_horizon(t, future_expiry)?;
    let grow = (params.kappa * tau).exp();
    let h10 = -g_damped(params.kappa, tau) * params.v3 * grow;
    let h01 = -f_damped(params.kappa, tau) * params.v1 * grow;
    Ok((h10, h01))
}
