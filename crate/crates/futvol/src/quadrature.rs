//! Invariant-measure averages of the fast volatility factor.
//!
//! The fast factor is the unit-rate OU process `dY = (m_Y - Y) dt +
//! nu sqrt(2) dW`, whose invariant law is `N(m_Y, nu^2)`. The group market
//! parameters need three averages against that law:
//!
//! ```text
//! eta_bar^2 = <eta^2>,
//! <eta>,
//! <phi' eta beta>,
//! ```
//!
//! where `phi` solves the Poisson equation `L0 phi = eta^2 - eta_bar^2` and
//! has the one-integral closed form
//!
//! ```text
//! phi'(y) = 1 / (nu^2 p(y)) * integral_{-inf}^{y} (eta^2(u) - eta_bar^2) p(u) du
//! ```
//!
//! with `p` the invariant density. Outer integrals use Gauss-Hermite
//! quadrature; the inner integral uses composite Gauss-Legendre on the
//! near-side tail so it never cancels. All quadratures double their node
//! counts until the relative change drops below 1e-8 and report an error if
//! that never happens. The integrands are assumed exponentially bounded in
//! `y`, which covers the lab's vol maps.

use crate::error::{ensure_positive, FutVolError, Result};
use crate::math::{integrate_gl, norm_pdf};

/// Relative node-doubling tolerance for every average.
pub const QUAD_TOL: f64 = 1e-8;

/// Invariant law `N(mean, sd^2)` of the unit-rate fast factor; its
/// diffusion coefficient is `beta = sd sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastFactorLaw {
    pub mean: f64,
    pub sd: f64,
}

impl FastFactorLaw {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        ensure_positive(sd, "fast-factor sd")?;
        if !mean.is_finite() {
            return Err(FutVolError::invalid("fast-factor mean must be finite"));
        }
        Ok(FastFactorLaw { mean, sd })
    }

    pub fn beta(&self) -> f64 {
        self.sd * std::f64::consts::SQRT_2
    }

    fn density(&self, y: f64) -> f64 {
        norm_pdf((y - self.mean) / self.sd) / self.sd
    }
}

/// Gauss-Hermite rule for weight `exp(-x^2)`: Golub-Welsch initial guesses
/// refined by Newton on the orthonormal Hermite recurrence.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!((2..=256).contains(&n), "supported node range is 2..=256");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                // Orthonormal recurrence keeps values O(1) up to n = 256.
                let mut p1 = std::f64::consts::PI.powf(-0.25);
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        GaussHermite { nodes, weights }
    }

    /// `E[f(X)]` for `X ~ N(mean, sd^2)`.
    pub fn gaussian_mean(&self, mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mean + scale * x);
        }
        acc / std::f64::consts::PI.sqrt()
    }
}

/// Node-doubling driver. `scale` sets the absolute floor below which the
/// result counts as zero (an exactly-vanishing average never settles under
/// a purely relative test).
fn converge(label: &str, scale: f64, mut eval: impl FnMut(usize) -> f64) -> Result<f64> {
    let mut prev = eval(32);
    for &n in &[64usize, 128, 256] {
        let next = eval(n);
        let change = (next - prev).abs();
        if change <= QUAD_TOL * next.abs().max(1e-10 * scale).max(1e-300) {
            return Ok(next);
        }
        prev = next;
    }
    Err(FutVolError::Quadrature {
        message: format!("{label}: node doubling did not settle below {QUAD_TOL:e}"),
    })
}

/// `<eta^2>` against the invariant law.
pub fn averaged_eta_sq(law: &FastFactorLaw, eta: impl Fn(f64) -> f64) -> Result<f64> {
    let scale = GaussHermite::new(32).gaussian_mean(law.mean, law.sd, |y| {
        let e = eta(y);
        e * e
    });
    converge("averaged eta^2", scale.abs(), |n| {
        GaussHermite::new(n).gaussian_mean(law.mean, law.sd, |y| {
            let e = eta(y);
            e * e
        })
    })
}

/// `<eta>` against the invariant law.
pub fn averaged_eta(law: &FastFactorLaw, eta: impl Fn(f64) -> f64) -> Result<f64> {
    let scale = GaussHermite::new(32).gaussian_mean(law.mean, law.sd, &eta);
    converge("averaged eta", scale.abs(), |n| {
        GaussHermite::new(n).gaussian_mean(law.mean, law.sd, &eta)
    })
}

/// Near-side evaluation of `integral_{-inf}^{y} (eta^2 - eta_sq_bar) p du`:
/// below the mean the left tail is integrated directly; above it the
/// complement is used (the total integral is zero by construction), so the
/// result is never a difference of near-equal tail masses.
fn inner_integral(
    law: &FastFactorLaw,
    eta: &impl Fn(f64) -> f64,
    eta_sq_bar: f64,
    y: f64,
    panels_per_sd: usize,
) -> f64 {
    let f = |u: f64| {
        let e = eta(u);
        (e * e - eta_sq_bar) * law.density(u)
    };
    let w = (y - law.mean) / law.sd;
    // 40 sd covers the density support at f64 scale; the upper pad absorbs
    // exponential growth of eta^2.
    let lo = law.mean - 40.0 * law.sd;
    let hi = law.mean + 45.0 * law.sd;
    if w <= 0.0 {
        let len_sd = (y - lo) / law.sd;
        let panels = (len_sd * panels_per_sd as f64).ceil().max(4.0) as usize;
        integrate_gl(f, lo, y, panels)
    } else {
        let len_sd = (hi - y) / law.sd;
        let panels = (len_sd * panels_per_sd as f64).ceil().max(4.0) as usize;
        -integrate_gl(f, y, hi, panels)
    }
}

/// `<phi' eta beta>`, the average entering the fast-scale group parameter.
pub fn averaged_phi_prime_eta_beta(law: &FastFactorLaw, eta: impl Fn(f64) -> f64) -> Result<f64> {
    let eta_sq_bar = averaged_eta_sq(law, &eta)?;
    let nu_sq = law.sd * law.sd;
    let beta = law.beta();
    let scale = eta_sq_bar.powf(1.5) * beta / law.sd;
    converge("averaged phi' eta beta", scale, |n| {
        let panels_per_sd = 2 * n / 32;
        GaussHermite::new(n).gaussian_mean(law.mean, law.sd, |y| {
            let phi_prime =
                inner_integral(law, &eta, eta_sq_bar, y, panels_per_sd) / (nu_sq * law.density(y));
            phi_prime * eta(y) * beta
        })
    })
}
