//! Validate the first-order price against the full-model Monte-Carlo lab:
//! simulate the exp-OU spot with fast and slow stochastic volatility,
//! compute the model-implied group parameters by quadrature, and measure
//! the pricing error along a shrinking `(eps, delta)` ladder. First-order
//! accuracy means the error decays linearly in `eps + delta` (log-log slope
//! near one).
//!
//! Run with: `cargo run --release --example model_validation`
//! (a larger budget, e.g. `-- 60000 100 1`, sharpens the small rungs).

use std::time::Instant;

use futvol::futures_curve::h0;
use futvol::pricing::VanillaSpec;
use futvol::simlab::{
    accuracy_sweep, implied_curve_params, implied_group_params, ModelSpec, SweepBudget,
};
use futvol::OptionStyle;

fn main() -> futvol::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n_outer: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8_000);
    let n_inner: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);

    let spec = ModelSpec::default_lab();
    let gmp = implied_group_params(&spec.with_scales(0.01, 0.01))?;
    println!(
        "implied group parameters at (eps, delta) = (0.01, 0.01):\n  eta_bar = {:.6}, V3_eps = {:+.3e}, V0_delta = {:+.3e}\n",
        gmp.eta_bar, gmp.v3_eps, gmp.v0_delta
    );

    // ATM call on a future settling one month after the option.
    let t0 = 0.25;
    let t_fut = t0 + 1.0 / 12.0;
    let curve = implied_curve_params(&spec)?;
    let strike = h0(&curve, 0.0, spec.u0, t_fut)?;
    let vanilla = VanillaSpec::new(OptionStyle::Call, strike, t0, t_fut, spec.rate)?;

    let clock = Instant::now();
    let result = accuracy_sweep(
        &spec,
        &vanilla,
        &[(0.25, 0.25), (0.05, 0.05), (0.01, 0.01)],
        SweepBudget { n_outer, n_inner },
        seed,
    )?;
    println!("eps    delta  mc_price    mc_se     approx      |error|    conclusive");
    for r in &result.rows {
        println!(
            "{:5.2}  {:5.2}  {:.7}  {:.2e}  {:.7}  {:.3e}  {}",
            r.eps, r.delta, r.mc_price, r.mc_se, r.approx_price, r.abs_error, r.conclusive
        );
    }
    match result.slope {
        Some(s) => println!("\nfitted log-log error slope vs (eps + delta): {s:.3}"),
        None => println!("\ntoo few conclusive rungs to fit a slope; raise the budget"),
    }
    println!("elapsed {:.1}s", clock.elapsed().as_secs_f64());
    Ok(())
}
