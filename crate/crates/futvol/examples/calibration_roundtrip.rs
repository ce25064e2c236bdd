//! Generate a synthetic option panel from known group parameters, calibrate
//! the three stages back, and compare. A noiseless panel is recovered to
//! near machine precision; with realistic iv noise the level stays tight
//! while the mean-reversion speed is only weakly identified.
//!
//! Run with: `cargo run --example calibration_roundtrip`

use futvol::marketdata::SynthPanelSpec;
use futvol::{calibrate, synth_panel, CalibrationOptions, GroupMarketParams};

fn main() -> futvol::Result<()> {
    let truth = GroupMarketParams::new(0.1385, 0.21967, -0.00017637, -0.012656)?;

    let clean = synth_panel(&truth, &SynthPanelSpec::default())?;
    let fit = calibrate(&clean, &CalibrationOptions::default())?;
    println!("noiseless panel ({} quotes):", clean.quote_count());
    println!("  kappa   {:.6}  (true {:.6})", fit.kappa_hat, truth.kappa);
    println!(
        "  eta_bar {:.6}  (true {:.6})",
        fit.eta_bar_hat, truth.eta_bar
    );
    println!(
        "  V3_eps  {:+.3e}  (true {:+.3e})",
        fit.v3eps_hat, truth.v3_eps
    );
    println!(
        "  V0_delta{:+.3e}  (true {:+.3e})",
        fit.v0delta_hat, truth.v0_delta
    );

    let noisy_spec = SynthPanelSpec {
        noise_sd: Some(0.002),
        seed: 2,
        ..Default::default()
    };
    let noisy = synth_panel(&truth, &noisy_spec)?;
    match calibrate(&noisy, &CalibrationOptions::default()) {
        Ok(fit) => {
            println!("\nnoisy panel (iv sd 0.002, seed 2):");
            println!("  kappa   {:.6}", fit.kappa_hat);
            println!("  eta_bar {:.6}", fit.eta_bar_hat);
            println!(
                "  stage-2 objective {:.3e} (noise floor scale)",
                fit.stage2_objective
            );
            println!("\nThe slope term structure is nearly flat in kappa, so 20bp of iv");
            println!("noise leaves kappa weakly identified; the level is much tighter.");
        }
        Err(err) => {
            println!("\nnoisy panel: {err}");
            println!("(some draws push kappa to the search bound; the fit reports it)");
        }
    }
    Ok(())
}
