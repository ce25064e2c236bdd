//! The futures curve `h0` of the mean-reverting spot, its corrections, and
//! the closed-form first-order inversion back to the log state.
//!
//! Run with: `cargo run --example futures_inversion`

use futvol::futures_curve::{
    first_order_point, h0, h_corrections, inversion_corrections, invert_h0,
};
use futvol::SpotDynamicsParams;

fn main() -> futvol::Result<()> {
    let params = SpotDynamicsParams::new(0.5, 0.1, 0.3, -0.02, -0.03)?;
    let state = 0.45;

    println!("tenor   h0        h10        h01        first-order price");
    for tau in [0.0, 0.25, 0.5, 1.0, 2.0, 5.0] {
        let base = h0(&params, 0.0, state, tau)?;
        let (h10, h01) = h_corrections(&params, 0.0, state, tau)?;
        let point = first_order_point(&params, 0.0, state, tau)?;
        println!(
            "{tau:5.2}  {base:.6}  {h10:+.6}  {h01:+.6}  {:.6}",
            point.price
        );
    }

    // Round trip through the closed-form inverse.
    let price = h0(&params, 0.0, state, 1.0)?;
    let back = invert_h0(&params, 0.0, price, 1.0)?;
    println!("\nh0({state}) = {price:.8}; H0 back = {back:.12}");

    // First-order inverse consistency: the composite residual shrinks
    // linearly in eps + delta when the corrections scale like sqrt(eps),
    // sqrt(delta).
    println!("\n eps=delta   |H0(h) + H10 + H01 - u|");
    for eps in [1e-2, 1e-3, 1e-4] {
        let scaled =
            SpotDynamicsParams::new(0.5, 0.1, 0.3, f64::sqrt(eps) * -0.6, f64::sqrt(eps) * -0.8)?;
        let x = first_order_point(&scaled, 0.0, state, 1.5)?.price;
        let (c10, c01) = inversion_corrections(&scaled, 0.0, 1.5)?;
        let residual = (invert_h0(&scaled, 0.0, x, 1.5)? + c10 + c01 - state).abs();
        println!("  {eps:7.0e}   {residual:.3e}");
    }
    Ok(())
}
