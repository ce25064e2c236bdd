//! Closed-form time-averaging weights shared by pricing, the smile expansion
//! and calibration.
//!
//! All weights derive from one kernel,
//!
//! ```text
//! lambda(t, T0, T, kappa) = (exp(-kappa (T - T0)) - exp(-kappa (T - t))) / (kappa (T0 - t)),
//! ```
//!
//! the average of `exp(-kappa s)` over `s in [T - T0, T - t]`. The family
//!
//! ```text
//! lambda_sigma^2 = lambda(2 kappa)
//! lambda_3       = lambda(3 kappa)
//! lambda_0       = lambda(kappa) - lambda(3 kappa)
//! lambda_1       = exp(-2 kappa (T - T0)) lambda(kappa) - lambda(3 kappa)
//! ```
//!
//! aggregates the exponential damping of the mean-reverting spot between the
//! valuation date, the option expiry `T0` and the future expiry `T`. The
//! time-averaged effective volatility is `sigma_bar = eta_bar * lambda_sigma`.
//!
//! Times are year fractions and rates are per annum.

use crate::error::{ensure_finite, ensure_positive, FutVolError, Result};

/// Below `kappa * (T - t) = 1e-6` the closed form is a difference of
/// near-equal exponentials; a truncated series takes over.
const SMALL_KAPPA_THRESHOLD: f64 = 1e-6;

/// Time triple `t <= T0 <= T`: valuation date, option expiry and expiry of
/// the underlying future, all in years.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tenor {
    valuation: f64,
    option_expiry: f64,
    future_expiry: f64,
}

impl Tenor {
    /// Validates the ordering `t <= T0 <= T`.
    pub fn new(valuation: f64, option_expiry: f64, future_expiry: f64) -> Result<Self> {
        ensure_finite(valuation, "valuation time")?;
        ensure_finite(option_expiry, "option expiry")?;
        ensure_finite(future_expiry, "future expiry")?;
        if valuation > option_expiry || option_expiry > future_expiry {
            return Err(FutVolError::invalid(format!(
                "tenor must satisfy t <= T0 <= T, got t={valuation}, T0={option_expiry}, T={future_expiry}"
            )));
        }
        Ok(Tenor {
            valuation,
            option_expiry,
            future_expiry,
        })
    }

    pub fn valuation(&self) -> f64 {
        self.valuation
    }

    pub fn option_expiry(&self) -> f64 {
        self.option_expiry
    }

    pub fn future_expiry(&self) -> f64 {
        self.future_expiry
    }

    /// Years from valuation to option expiry, `T0 - t`.
    pub fn years_to_option(&self) -> f64 {
        self.option_expiry - self.valuation
    }

    /// Years from option expiry to future expiry, `T - T0`.
    pub fn option_to_future(&self) -> f64 {
        self.future_expiry - self.option_expiry
    }

    /// Years from valuation to future expiry, `T - t`.
    pub fn years_to_future(&self) -> f64 {
        self.future_expiry - self.valuation
    }

    fn check_spans_kappa(&self, kappa: f64) -> Result<()> {
        ensure_positive(kappa, "kappa")?;
        if self.years_to_option() <= 0.0 {
            return Err(FutVolError::invalid(
                "weight evaluation needs T0 > t (lambda divides by T0 - t)",
            ));
        }
        Ok(())
    }
}

/// The five weights evaluated at one `(Tenor, kappa)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSet {
    pub lambda: f64,
    pub lambda_sigma: f64,
    pub lambda3: f64,
    pub lambda0: f64,
    pub lambda1: f64,
}

/// Mean of `exp(-kappa s)` over `s in [a, b]`, `0 <= a < b`, `kappa > 0`.
///
/// Written as `exp(-kappa a) * (1 - exp(-kappa (b - a))) / (kappa (b - a))`
/// with `exp_m1`, which has no catastrophic cancellation anywhere on the
/// admissible domain. The series branch keeps the tiny-`kappa b` regime
/// accurate to better than 1e-12.
fn lambda_mean(a: f64, b: f64, kappa: f64) -> f64 {
    if kappa * b < SMALL_KAPPA_THRESHOLD {
        lambda_series(a, b, kappa)
    } else {
        lambda_closed(a, b, kappa)
    }
}

fn lambda_closed(a: f64, b: f64, kappa: f64) -> f64 {
    let x = kappa * (b - a);
    (-kappa * a).exp() * (-f64::exp_m1(-x)) / x
}

/// Three-term expansion of the integral mean of `exp(-kappa s)` in `kappa`:
/// `1 - kappa (a+b)/2 + kappa^2 (a^2 + ab + b^2)/6`.
fn lambda_series(a: f64, b: f64, kappa: f64) -> f64 {
    1.0 - kappa * (a + b) / 2.0 + kappa * kappa * (a * a + a * b + b * b) / 6.0
}

/// Base weight `lambda(t, T0, T, kappa)`.
pub fn lambda(tenor: &Tenor, kappa: f64) -> Result<f64> {
    tenor.check_spans_kappa(kappa)?;
    Ok(lambda_mean(
        tenor.option_to_future(),
        tenor.years_to_future(),
        kappa,
    ))
}

/// Volatility weight, `lambda_sigma = sqrt(lambda(2 kappa))`.
pub fn lambda_sigma(tenor: &Tenor, kappa: f64) -> Result<f64> {
    Ok(lambda(tenor, 2.0 * kappa)?.sqrt())
}

/// Fast-scale weight, `lambda_3 = lambda(3 kappa)`.
pub fn lambda3(tenor: &Tenor, kappa: f64) -> Result<f64> {
    lambda(tenor, 3.0 * kappa)
}

/// Slow-scale level weight, `lambda_0 = lambda(kappa) - lambda(3 kappa)`.
pub fn lambda0(tenor: &Tenor, kappa: f64) -> Result<f64> {
    Ok(lambda(tenor, kappa)? - lambda(tenor, 3.0 * kappa)?)
}

/// Slow-scale skew weight,
/// `lambda_1 = exp(-2 kappa (T - T0)) lambda(kappa) - lambda(3 kappa)`.
pub fn lambda1(tenor: &Tenor, kappa: f64) -> Result<f64> {
    let damp = (-2.0 * kappa * tenor.option_to_future()).exp();
    Ok(damp * lambda(tenor, kappa)? - lambda(tenor, 3.0 * kappa)?)
}

/// Time-averaged effective volatility `sigma_bar = eta_bar * lambda_sigma`.
pub fn sigma_bar(tenor: &Tenor, kappa: f64, eta_bar: f64) -> Result<f64> {
    ensure_positive(eta_bar, "eta_bar")?;
    Ok(eta_bar * lambda_sigma(tenor, kappa)?)
}

/// Evaluates the whole weight family at once.
pub fn weight_set(tenor: &Tenor, kappa: f64) -> Result<WeightSet> {
    tenor.check_spans_kappa(kappa)?;
    let a = tenor.option_to_future();
    let b = tenor.years_to_future();
    let l1 = lambda_mean(a, b, kappa);
    let l2 = lambda_mean(a, b, 2.0 * kappa);
    let l3 = lambda_mean(a, b, 3.0 * kappa);
    Ok(WeightSet {
        lambda: l1,
        lambda_sigma: l2.sqrt(),
        lambda3: l3,
        lambda0: l1 - l3,
        lambda1: (-2.0 * kappa * a).exp() * l1 - l3,
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::math::integrate_gl;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tenor(t: f64, t0: f64, tm: f64) -> Tenor {
        Tenor::new(t, t0, tm).unwrap()
    }

    /// Quadrature oracle: integral mean of exp(-kappa s) over [T-T0, T-t].
    fn lambda_oracle(ten: &Tenor, kappa: f64) -> f64 {
        let a = ten.option_to_future();
        let b = ten.years_to_future();
        integrate_gl(|s| (-kappa * s).exp(), a, b, 64) / (b - a)
    }

    // --- lambda ---

    #[test]
    fn lambda_small_kappa_limit_is_one() {
        let l = lambda(&tenor(0.0, 1.0, 1.0), 1e-12).unwrap();
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda_matches_quadrature_oracle() {
        // Frozen from the oracle: (t=0, T0=1, T=2), kappa=0.5.
        let ten = tenor(0.0, 1.0, 2.0);
        let frozen = lambda_oracle(&ten, 0.5);
        assert_abs_diff_eq!(frozen, 0.477_302_437_082_382_2, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda(&ten, 0.5).unwrap(), frozen, epsilon = 1e-12);
    }

    #[test]
    fn lambda_collapses_when_future_equals_option_expiry() {
        // T = T0 makes a = 0 and lambda = (1 - exp(-kappa)) / kappa at T0 - t = 1.
        for &kappa in &[0.1, 0.7, 3.0] {
            let l = lambda(&tenor(0.0, 1.0, 1.0), kappa).unwrap();
            assert_abs_diff_eq!(l, (1.0 - (-kappa).exp()) / kappa, epsilon = 1e-15);
        }
    }

    #[test]
    fn lambda_rejects_bad_inputs() {
        let ten = tenor(0.0, 1.0, 2.0);
        assert!(lambda(&ten, 0.0).is_err());
        assert!(lambda(&ten, f64::NAN).is_err());
        assert!(lambda(&Tenor::new(1.0, 1.0, 2.0).unwrap(), 0.5).is_err());
        assert!(Tenor::new(0.0, 2.0, 1.0).is_err());
    }

    // --- lambda_sigma / lambda3 ---

    #[test]
    fn lambda_sigma_matches_oracle_at_doubled_kappa() {
        let ten = tenor(0.0, 1.0, 2.0);
        let frozen = lambda_oracle(&ten, 1.0);
        assert_abs_diff_eq!(frozen, 0.232_544_157_934_829_63, epsilon = 1e-12);
        assert_abs_diff_eq!(
            lambda_sigma(&ten, 0.5).unwrap(),
            frozen.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn lambda_sigma_small_kappa_limit_is_one() {
        let l = lambda_sigma(&tenor(0.0, 1.0, 2.0), 1e-13).unwrap();
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda3_matches_oracle_at_tripled_kappa() {
        let ten = tenor(0.0, 1.0, 2.0);
        let frozen = lambda_oracle(&ten, 1.5);
        assert_abs_diff_eq!(frozen, 0.115_562_061_187_043_92, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda3(&ten, 0.5).unwrap(), frozen, epsilon = 1e-14);
        // Bit-for-bit delegation.
        assert_eq!(lambda3(&ten, 0.5).unwrap(), lambda(&ten, 1.5).unwrap());
    }

    // --- lambda0 / lambda1 ---

    #[test]
    fn lambda0_is_difference_of_oracles() {
        let ten = tenor(0.0, 1.0, 2.0);
        let frozen = lambda_oracle(&ten, 0.5) - lambda_oracle(&ten, 1.5);
        assert_abs_diff_eq!(frozen, 0.361_740_375_895_338_28, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda0(&ten, 0.5).unwrap(), frozen, epsilon = 1e-12);
    }

    #[test]
    fn lambda0_vanishes_at_small_kappa() {
        let l = lambda0(&tenor(0.0, 1.0, 2.0), 1e-12).unwrap();
        assert!(l.abs() < 1e-11);
    }

    #[test]
    fn lambda1_matches_prefactored_oracle() {
        let ten = tenor(0.0, 1.0, 2.0);
        let frozen = (-1.0f64).exp() * lambda_oracle(&ten, 0.5) - lambda_oracle(&ten, 1.5);
        assert_abs_diff_eq!(frozen, 0.060_027_692_636_590_35, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda1(&ten, 0.5).unwrap(), frozen, epsilon = 1e-12);
    }

    #[test]
    fn lambda1_equals_lambda0_when_future_equals_option_expiry() {
        let ten = tenor(0.0, 1.0, 1.0);
        assert_abs_diff_eq!(
            lambda1(&ten, 0.8).unwrap(),
            lambda0(&ten, 0.8).unwrap(),
            epsilon = 1e-16
        );
    }

    #[test]
    fn lambda1_vanishes_at_small_kappa() {
        let l = lambda1(&tenor(0.0, 1.0, 2.0), 1e-12).unwrap();
        assert!(l.abs() < 1e-11);
    }

    // --- sigma_bar ---

    #[test]
    fn sigma_bar_small_kappa_is_eta_bar() {
        let s = sigma_bar(&tenor(0.0, 1.0, 1.0), 1e-13, 0.2).unwrap();
        assert_abs_diff_eq!(s, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn sigma_bar_composes_with_lambda_sigma_oracle() {
        // eta_bar magnitude from a market calibration of crude-oil options.
        let ten = tenor(0.0, 1.0, 2.0);
        let frozen = 0.21967 * lambda_oracle(&ten, 1.0).sqrt();
        assert_abs_diff_eq!(frozen, 0.105_931_096_267_207_66, epsilon = 1e-12);
        assert_abs_diff_eq!(
            sigma_bar(&ten, 0.5, 0.21967).unwrap(),
            frozen,
            epsilon = 1e-12
        );
    }

    #[test]
    fn sigma_bar_is_linear_in_eta_bar() {
        let ten = tenor(0.1, 0.6, 1.3);
        let one = sigma_bar(&ten, 0.9, 0.15).unwrap();
        let two = sigma_bar(&ten, 0.9, 0.30).unwrap();
        assert_abs_diff_eq!(two, 2.0 * one, epsilon = 1e-16);
    }

    // --- series branch ---

    #[test]
    fn series_matches_exact_continuation() {
        // kappa (T - t) below the switch: both branches agree to 1e-12.
        let (a, b) = (1.0, 3.0);
        for &kappa in &[1e-7 / 3.0, 1e-8, 1e-10] {
            let series = lambda_series(a, b, kappa);
            let exact = lambda_closed(a, b, kappa);
            assert!((series - exact).abs() <= 1e-12, "kappa={kappa}");
        }
    }

    // --- properties ---

    proptest! {
        #[test]
        fn sigma_weight_identity(
            t in 0.0..2.0f64,
            dt0 in 1e-3..3.0f64,
            dtf in 0.0..3.0f64,
            kappa in 1e-3..10.0f64,
        ) {
            let ten = tenor(t, t + dt0, t + dt0 + dtf);
            let ls = lambda_sigma(&ten, kappa).unwrap();
            let l2 = lambda(&ten, 2.0 * kappa).unwrap();
            prop_assert!((ls * ls - l2).abs() <= 1e-14 * l2.max(1e-300));
        }

        #[test]
        fn lambda_tracks_quadrature(
            t in 0.0..2.0f64,
            dt0 in 1e-2..3.0f64,
            dtf in 0.0..3.0f64,
            kappa in 1e-3..10.0f64,
        ) {
            let ten = tenor(t, t + dt0, t + dt0 + dtf);
            let l = lambda(&ten, kappa).unwrap();
            prop_assert!((l - lambda_oracle(&ten, kappa)).abs() <= 1e-10);
        }

        #[test]
        fn lambda_decreasing_in_kappa_and_lambdas_signed(
            t in 0.0..2.0f64,
            dt0 in 1e-3..3.0f64,
            dtf in 1e-3..3.0f64,
            kappa in 1e-3..10.0f64,
        ) {
            let ten = tenor(t, t + dt0, t + dt0 + dtf);
            let l = lambda(&ten, kappa).unwrap();
            let l_up = lambda(&ten, kappa * 1.5).unwrap();
            prop_assert!(l_up < l);
            prop_assert!(lambda0(&ten, kappa).unwrap() > 0.0);
            prop_assert!(lambda1(&ten, kappa).unwrap() >= 0.0);
            prop_assert!(l > 0.0 && l <= 1.0);
        }
    }
}
