//! Three-stage least-squares calibration of the group market parameters
//! `(kappa, eta_bar, V3_eps, V0_delta)` from an implied-volatility panel.
//!
//! Stage 1 regresses each smile's implied vols on LMMR (ordinary least
//! squares, exact normal equations), producing per-smile slopes `a_hat` and
//! intercepts `b_hat`. Stage 2 fits the slope term structure
//!
//! ```text
//! a_hat_ij ~= a0 a_eps(T0ij, Ti, kappa) + a1 a_delta(T0ij, Ti, kappa)
//! ```
//!
//! by variable projection: for fixed kappa the problem is linear in
//! `(a0, a1)` and solved exactly, so the outer search is one-dimensional in
//! kappa (log-grid scan over [1e-4, 20] plus golden-section refinement).
//! Stage 3 fits the intercepts against
//!
//! ```text
//! b_hat_ij ~= b0 b_bar + b0^2 (a0_hat b_eps + a1_hat b_delta)
//! ```
//!
//! a scalar quartic in `b0`, minimized by a bracketed scan with golden
//! section and a Newton polish. The group parameters then follow
//! algebraically: `eta_bar = b0`, `V3_eps = a0 b0^3`, `V0_delta = a1 b0^3`.
//!
//! Every stage uses fixed scan grids and no randomness: identical panels
//! yield bit-identical results.

use rayon::prelude::*;

use crate::error::{ensure_positive, FutVolError, Result};
use crate::marketdata::QuotePanel;
use crate::pricing::GroupMarketParams;
use crate::smile::smile_coefficients;

/// Outer search bounds for the mean-reversion speed.
pub const KAPPA_BOUNDS: (f64, f64) = (1e-4, 20.0);
/// Upper bound of the level search; vol levels above 3 are outside any
/// meaningful commodity regime.
pub const B0_MAX: f64 = 3.0;

const KAPPA_SCAN_POINTS: usize = 241;
const B0_SCAN_POINTS: usize = 600;
const GOLDEN_ITERATIONS: usize = 120;

/// Per-smile regression output with the tenor it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmileFit {
    pub option_expiry: f64,
    pub future_expiry: f64,
    /// OLS slope of iv on LMMR.
    pub a_hat: f64,
    /// OLS intercept.
    pub b_hat: f64,
    pub residual_rms: f64,
    pub n_quotes: usize,
}

/// Stage-1 output: one fit per usable smile plus exclusion warnings.
#[derive(Debug, Clone)]
pub struct StageOneFit {
    pub smiles: Vec<SmileFit>,
    pub warnings: Vec<String>,
}

/// Stage-2 output: slope coefficients and the fitted mean-reversion speed.
#[derive(Debug, Clone, Copy)]
pub struct StageTwoFit {
    pub a0_hat: f64,
    pub a1_hat: f64,
    pub kappa_hat: f64,
    pub objective: f64,
}

/// Stage-3 output: the volatility level and its objective.
#[derive(Debug, Clone, Copy)]
pub struct StageThreeFit {
    pub b0_hat: f64,
    pub objective: f64,
}

/// Full calibration output.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub kappa_hat: f64,
    pub eta_bar_hat: f64,
    pub v3eps_hat: f64,
    pub v0delta_hat: f64,
    pub a0_hat: f64,
    pub a1_hat: f64,
    pub b0_hat: f64,
    pub stage2_objective: f64,
    pub stage3_objective: f64,
    pub stage1_warnings: Vec<String>,
    /// True when the fitted corrections sit inside the expansion's
    /// credibility bound `|V| <= eta_bar^3 / 2`.
    pub expansion_credible: bool,
}

impl CalibrationResult {
    pub fn group_params(&self) -> Result<GroupMarketParams> {
        GroupMarketParams::new(
            self.kappa_hat,
            self.eta_bar_hat,
            self.v3eps_hat,
            self.v0delta_hat,
        )
    }
}

/// Calibration knobs; the defaults reproduce the plain staged procedure.
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// Drop smiles with `T0` below this many years before fitting.
    pub min_option_expiry: Option<f64>,
    /// Extra seed candidate for the kappa scan.
    pub init_kappa: f64,
    /// Extra seed candidate for the level scan; defaults to the mean of the
    /// stage-1 intercepts.
    pub init_b0: Option<f64>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            min_option_expiry: None,
            init_kappa: 0.5,
            init_b0: None,
        }
    }
}

/// Stage 1: independent per-smile OLS of implied vol on LMMR.
///
/// Smiles whose LMMR design is degenerate (all strikes at one LMMR) are
/// excluded with a warning rather than failing the whole panel.
pub fn stage1_smile_regression(panel: &QuotePanel) -> Result<StageOneFit> {
    let fits: Vec<std::result::Result<SmileFit, String>> = panel
        .smiles()
        .par_iter()
        .map(|smile| {
            let points = smile.lmmr_points();
            let n = points.len() as f64;
            let mean_x = points.iter().map(|p| p.lmmr).sum::<f64>() / n;
            let mean_y = points.iter().map(|p| p.iv).sum::<f64>() / n;
            let mut sxx = 0.0;
            let mut sxy = 0.0;
            for p in &points {
                sxx += (p.lmmr - mean_x) * (p.lmmr - mean_x);
                sxy += (p.lmmr - mean_x) * (p.iv - mean_y);
            }
            let scale = points.iter().map(|p| p.lmmr * p.lmmr).sum::<f64>() / n;
            if sxx <= 1e-24 * scale.max(1e-12) {
                return Err(format!(
                    "smile (T0={:.6}, T={:.6}): degenerate LMMR grid, excluded",
                    smile.option_expiry, smile.future_expiry
                ));
            }
            let a_hat = sxy / sxx;
            let b_hat = mean_y - a_hat * mean_x;
            let sse: f64 = points
                .iter()
                .map(|p| {
                    let r = p.iv - (a_hat * p.lmmr + b_hat);
                    r * r
                })
                .sum();
            Ok(SmileFit {
                option_expiry: smile.option_expiry,
                future_expiry: smile.future_expiry,
                a_hat,
                b_hat,
                residual_rms: (sse / n).sqrt(),
                n_quotes: smile.strikes.len(),
            })
        })
        .collect();

    let mut smiles = Vec::new();
    let mut warnings = Vec::new();
    for fit in fits {
        match fit {
            Ok(f) => smiles.push(f),
            Err(w) => warnings.push(w),
        }
    }
    if smiles.is_empty() {
        return Err(FutVolError::EmptyPanel);
    }
    Ok(StageOneFit { smiles, warnings })
}

/// Inner linear solve of stage 2 at fixed kappa. Returns `(a0, a1, sse)` or
/// `None` when the 2x2 normal system is numerically singular at this kappa.
fn stage2_inner(fits: &[SmileFit], kappa: f64) -> Option<(f64, f64, f64)> {
    let mut suu = 0.0;
    let mut svv = 0.0;
    let mut suv = 0.0;
    let mut sua = 0.0;
    let mut sva = 0.0;
    for fit in fits {
        let c = smile_coefficients(fit.option_expiry, fit.future_expiry, kappa).ok()?;
        let (u, v) = (c.a_eps, c.a_delta);
        suu += u * u;
        svv += v * v;
        suv += u * v;
        sua += u * fit.a_hat;
        sva += v * fit.a_hat;
    }
    let det = suu * svv - suv * suv;
    if det.abs() <= 1e-12 * (suu * svv).max(f64::MIN_POSITIVE) {
        return None;
    }
    let a0 = (svv * sua - suv * sva) / det;
    let a1 = (suu * sva - suv * sua) / det;
    let sse: f64 = fits
        .iter()
        .map(|fit| {
            let c = smile_coefficients(fit.option_expiry, fit.future_expiry, kappa)
                .expect("validated tenor");
            let r = fit.a_hat - (a0 * c.a_eps + a1 * c.a_delta);
            r * r
        })
        .sum();
    Some((a0, a1, sse))
}

/// Stage 2: fit `(a0, a1, kappa)` to the stage-1 slopes by variable
/// projection with a deterministic log-grid scan over kappa.
pub fn stage2_term_structure_fit(fit: &StageOneFit, init_kappa: f64) -> Result<StageTwoFit> {
    ensure_positive(init_kappa, "init_kappa")?;
    let fits = &fit.smiles;
    if fits.len() < 3 {
        return Err(FutVolError::Diagnostic {
            message: format!("stage 2 needs at least 3 smiles, got {}", fits.len()),
        });
    }
    let mut pairs: Vec<(u64, u64)> = fits
        .iter()
        .map(|f| (f.option_expiry.to_bits(), f.future_expiry.to_bits()))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    if pairs.len() < 2 {
        return Err(FutVolError::Collinearity {
            message: "all smiles share one (T0, T) pair; a_eps and a_delta columns are collinear"
                .to_string(),
        });
    }

    let (lo, hi) = KAPPA_BOUNDS;
    let ln_lo = lo.ln();
    let ln_step = (hi / lo).ln() / (KAPPA_SCAN_POINTS - 1) as f64;
    let mut candidates: Vec<f64> = (0..KAPPA_SCAN_POINTS)
        .map(|i| (ln_lo + i as f64 * ln_step).exp())
        .collect();
    if init_kappa >= lo && init_kappa <= hi {
        candidates.push(init_kappa);
    }

    let sse_at = |kappa: f64| stage2_inner(fits, kappa).map(|(_, _, sse)| sse);
    let mut best: Option<(f64, f64)> = None; // (kappa, sse)
    let mut any_solvable = false;
    for &kappa in &candidates {
        if let Some(sse) = sse_at(kappa) {
            any_solvable = true;
            if best.is_none_or(|(_, b)| sse < b) {
                best = Some((kappa, sse));
            }
        }
    }
    if !any_solvable {
        return Err(FutVolError::Collinearity {
            message: "slope design matrix is singular across the whole kappa range".to_string(),
        });
    }
    let (kappa_best, _) = best.expect("scan found a solvable point");

    // Golden-section refinement on ln(kappa) around the best grid point.
    let mut a = (kappa_best.ln() - ln_step).max(ln_lo);
    let mut b = (kappa_best.ln() + ln_step).min(hi.ln());
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let eval = |ln_k: f64| sse_at(ln_k.exp()).unwrap_or(f64::INFINITY);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..GOLDEN_ITERATIONS {
        if (b - a).abs() <= 1e-13 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = eval(x2);
        }
    }
    let kappa_hat = (0.5 * (a + b)).exp();

    let (a0_hat, a1_hat, objective) =
        stage2_inner(fits, kappa_hat).ok_or_else(|| FutVolError::Collinearity {
            message: format!("slope design matrix is singular at the optimum kappa {kappa_hat}"),
        })?;

    let rel = |x: f64, bound: f64| (x - bound).abs() / bound;
    if rel(kappa_hat, lo) < 1e-3 || rel(kappa_hat, hi) < 1e-3 {
        return Err(FutVolError::Diagnostic {
            message: format!(
                "kappa {kappa_hat:.6} pinned to the search bound [{lo}, {hi}]; term structure uninformative"
            ),
        });
    }
    Ok(StageTwoFit {
        a0_hat,
        a1_hat,
        kappa_hat,
        objective,
    })
}

fn stage3_objective(fits: &[SmileFit], stage2: &StageTwoFit, b0: f64) -> f64 {
    fits.iter()
        .map(|fit| {
            let c = smile_coefficients(fit.option_expiry, fit.future_expiry, stage2.kappa_hat)
                .expect("validated tenor");
            let model =
                b0 * c.b_bar + b0 * b0 * (stage2.a0_hat * c.b_eps + stage2.a1_hat * c.b_delta);
            let r = fit.b_hat - model;
            r * r
        })
        .sum()
}

/// Stage 3: scalar minimization of the quartic level objective on
/// `(0, B0_MAX]`, bracketed scan + golden section + one Newton polish.
pub fn stage3_level_fit(
    fit: &StageOneFit,
    stage2: &StageTwoFit,
    init_b0: Option<f64>,
) -> Result<StageThreeFit> {
    let fits = &fit.smiles;
    let obj = |b0: f64| stage3_objective(fits, stage2, b0);

    let step = B0_MAX / B0_SCAN_POINTS as f64;
    let mut candidates: Vec<f64> = (1..=B0_SCAN_POINTS).map(|i| i as f64 * step).collect();
    if let Some(b0) = init_b0 {
        if b0 > 0.0 && b0 <= B0_MAX {
            candidates.push(b0);
        }
    }
    let mut best = candidates[0];
    let mut best_val = obj(best);
    for &c in &candidates[1..] {
        let v = obj(c);
        if v < best_val {
            best = c;
            best_val = v;
        }
    }
    if best <= step || best >= B0_MAX - step {
        return Err(FutVolError::Diagnostic {
            message: format!("level objective has no interior minimum (best scan point {best:.4})"),
        });
    }

    let mut a = best - step;
    let mut b = best + step;
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = obj(x1);
    let mut f2 = obj(x2);
    for _ in 0..GOLDEN_ITERATIONS {
        if (b - a).abs() <= 1e-14 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = obj(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = obj(x2);
        }
    }
    let mut b0_hat = 0.5 * (a + b);

    // Newton polish on the quartic's stationarity condition.
    for _ in 0..4 {
        let h = 1e-7 * b0_hat.max(1e-3);
        let d1 = (obj(b0_hat + h) - obj(b0_hat - h)) / (2.0 * h);
        let d2 = (obj(b0_hat + h) - 2.0 * obj(b0_hat) + obj(b0_hat - h)) / (h * h);
        if d2 <= 0.0 {
            break;
        }
        let next = b0_hat - d1 / d2;
        if next <= 0.0 || next > B0_MAX || !next.is_finite() {
            break;
        }
        b0_hat = next;
    }

    Ok(StageThreeFit {
        b0_hat,
        objective: obj(b0_hat),
    })
}

/// Algebraic extraction of the group parameters from the fitted stages.
pub fn extract_parameters(
    stage1: &StageOneFit,
    stage2: &StageTwoFit,
    stage3: &StageThreeFit,
) -> CalibrationResult {
    let b0 = stage3.b0_hat;
    let v3 = stage2.a0_hat * b0 * b0 * b0;
    let v0 = stage2.a1_hat * b0 * b0 * b0;
    let bound = 0.5 * b0 * b0 * b0;
    CalibrationResult {
        kappa_hat: stage2.kappa_hat,
        eta_bar_hat: b0,
        v3eps_hat: v3,
        v0delta_hat: v0,
        a0_hat: stage2.a0_hat,
        a1_hat: stage2.a1_hat,
        b0_hat: b0,
        stage2_objective: stage2.objective,
        stage3_objective: stage3.objective,
        stage1_warnings: stage1.warnings.clone(),
        expansion_credible: v3.abs() <= bound && v0.abs() <= bound,
    }
}

/// Runs the whole staged calibration on a panel.
pub fn calibrate(panel: &QuotePanel, options: &CalibrationOptions) -> Result<CalibrationResult> {
    let filtered;
    let panel = match options.min_option_expiry {
        Some(min_t0) => {
            filtered = panel.filter_min_option_expiry(min_t0)?;
            &filtered
        }
        None => panel,
    };
    let stage1 = stage1_smile_regression(panel)?;
    let stage2 = stage2_term_structure_fit(&stage1, options.init_kappa)?;
    let init_b0 = options.init_b0.or_else(|| {
        let n = stage1.smiles.len() as f64;
        Some(stage1.smiles.iter().map(|f| f.b_hat).sum::<f64>() / n)
    });
    let stage3 = stage3_level_fit(&stage1, &stage2, init_b0)?;
    Ok(extract_parameters(&stage1, &stage2, &stage3))
}
