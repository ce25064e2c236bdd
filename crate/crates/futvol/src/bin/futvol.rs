use std::process::ExitCode;

use clap::{Parser, Subcommand};

use futvol::cli::{
    cmd_calibrate, cmd_price, cmd_surface, cmd_validate, exit_code, CalibrateArgs, PriceArgs,
    SurfaceArgs, ValidateArgs,
};

/// Pricing, smile and calibration toolkit for options on futures over
/// mean-reverting assets with multiscale stochastic volatility.
#[derive(Parser)]
#[command(name = "futvol", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price one European option with the first-order correction breakdown.
    Price(PriceArgs),
    /// Tabulate the implied-volatility surface on a strike/maturity grid.
    Surface(SurfaceArgs),
    /// Calibrate group market parameters to a quote-panel CSV.
    Calibrate(CalibrateArgs),
    /// Validate the first-order approximation against the Monte-Carlo lab.
    Validate(ValidateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    let outcome = match &cli.command {
        Command::Price(args) => cmd_price(args, &mut stdout),
        Command::Surface(args) => cmd_surface(args),
        Command::Calibrate(args) => cmd_calibrate(args, &mut stdout),
        Command::Validate(args) => cmd_validate(args, &mut stdout),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
