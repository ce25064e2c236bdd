//! Load an option-chain CSV with mixed quote kinds (implied vols and raw
//! call/put prices), letting the loader invert prices to vols and drop
//! boundary quotes, then write the canonical iv-only panel back out.
//!
//! Run with: `cargo run --example chain_ingestion`

use futvol::marketdata::{load_panel, save_panel};
use futvol::BlackInputs;

fn main() -> futvol::Result<()> {
    let dir = std::env::temp_dir();
    let chain = dir.join("futvol_example_chain.csv");
    let canonical = dir.join("futvol_example_chain_iv.csv");

    // Build a small chain: one future (one year out), options at 90 days,
    // quotes arriving as vols and as premia.
    let t0 = 90.0 / 365.0;
    let mut csv = String::from("future_days,future_price,option_days,strike,kind,value\n");
    for (strike, vol) in [(90.0, 0.235), (95.0, 0.228), (100.0, 0.222)] {
        csv.push_str(&format!("365,100.0,90,{strike},iv,{vol}\n"));
    }
    for (strike, vol) in [(105.0, 0.217), (110.0, 0.213)] {
        let premium = BlackInputs::new(100.0, strike, vol, t0, 0.01)?.call_price();
        csv.push_str(&format!("365,100.0,90,{strike},call_price,{premium}\n"));
    }
    // Two rows the validator must drop: a negative strike and a premium
    // pinned to intrinsic value (outside the open no-arbitrage band).
    csv.push_str("365,100.0,90,-5.0,iv,0.2\n");
    csv.push_str("365,100.0,90,80.0,call_price,19.950124791926823\n");
    std::fs::write(&chain, csv)?;

    let outcome = load_panel(&chain, 365.0, 0.01)?;
    println!(
        "loaded {} quotes into {} smile(s)",
        outcome.panel.quote_count(),
        outcome.panel.smiles().len()
    );
    for w in &outcome.warnings {
        println!("  warning: {w}");
    }
    let smile = &outcome.panel.smiles()[0];
    println!("\nstrike  implied vol");
    for (k, iv) in smile.strikes.iter().zip(&smile.ivs) {
        println!("{k:6.1}  {iv:.6}");
    }

    save_panel(&outcome.panel, &canonical, 365.0)?;
    println!("\ncanonical panel written to {}", canonical.display());
    Ok(())
}
