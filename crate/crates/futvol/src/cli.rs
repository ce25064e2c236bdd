//! Batch command layer behind the `futvol` binary.
//!
//! Four workflows: `price` (one corrected price as a CSV row), `surface`
//! (smile grid CSV plus optional SVG plots), `calibrate` (staged fit of a
//! quote panel with a fit report and residual plot), `validate` (accuracy
//! ladder of the Monte-Carlo lab against the first-order price).
//!
//! Every command that writes files records its full invocation in a
//! `manifest.txt` inside the output directory; rerunning an identical
//! manifest reproduces every output byte for byte.
//!
//! Exit codes: 0 success, 1 input or domain error, 2 usage error (from
//! argument parsing), 3 diagnostic failure (non-convergent calibration,
//! accuracy slope out of band, under-resolved rung).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use crate::black76::{implied_vol, OptionStyle};
use crate::calibration::{calibrate, CalibrationOptions};
use crate::error::{FutVolError, Result};
use crate::futures_curve::Seasonality;
use crate::marketdata::{load_panel, DEFAULT_DAY_COUNT};
use crate::pricing::{price_total, GroupMarketParams, VanillaSpec};
use crate::simlab::{accuracy_sweep, ModelSpec, SweepBudget, VolMap};
use crate::smile::{iv_approx, lmmr};
use crate::svg::{render, Series, SeriesKind};

/// Slope acceptance band of the validation ladder.
pub const SLOPE_BAND: (f64, f64) = (0.7, 1.3);

/// Maps an error to the process exit code contract.
pub fn exit_code(err: &FutVolError) -> i32 {
    match err {
        FutVolError::Diagnostic { .. }
        | FutVolError::Collinearity { .. }
        | FutVolError::NoConvergence { .. }
        | FutVolError::Quadrature { .. } => 3,
        _ => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Call,
    Put,
}

impl From<StyleArg> for OptionStyle {
    fn from(s: StyleArg) -> OptionStyle {
        match s {
            StyleArg::Call => OptionStyle::Call,
            StyleArg::Put => OptionStyle::Put,
        }
    }
}

/// Reproducibility record written next to every file artifact.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = RunManifest::default();
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn write_to(&self, dir: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(text, "{k}={v}");
        }
        let _ = writeln!(text, "tool_version={}", env!("CARGO_PKG_VERSION"));
        fs::write(dir.join("manifest.txt"), text)?;
        Ok(())
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

// --- price ---

#[derive(Debug, Args)]
pub struct PriceArgs {
    /// Current price of the underlying future.
    #[arg(long)]
    pub future_price: f64,
    #[arg(long)]
    pub strike: f64,
    /// Option expiry in years.
    #[arg(long)]
    pub t0: f64,
    /// Future expiry in years (at least t0).
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub rate: f64,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub eta_bar: f64,
    /// Fast-scale group coefficient V3_eps.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub v3: f64,
    /// Slow-scale group coefficient V0_delta.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub v0: f64,
    #[arg(long, value_enum, default_value_t = StyleArg::Call)]
    pub style: StyleArg,
    /// Optional output directory (price.csv + manifest.txt).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Prints the price breakdown as a CSV row; optionally archives it.
pub fn cmd_price(args: &PriceArgs, stdout: &mut impl std::io::Write) -> Result<i32> {
    let gmp = GroupMarketParams::new(args.kappa, args.eta_bar, args.v3, args.v0)?;
    let vanilla = VanillaSpec::new(args.style.into(), args.strike, args.t0, args.t, args.rate)?;
    let breakdown = price_total(args.future_price, &vanilla, &gmp, 0.0)?;
    let mut csv = String::from("p0,p10_eps,p01_delta,total\n");
    let _ = writeln!(
        csv,
        "{},{},{},{}",
        breakdown.p0, breakdown.p10_eps, breakdown.p01_delta, breakdown.total
    );
    stdout.write_all(csv.as_bytes())?;
    if !gmp.expansion_credible() {
        eprintln!(
            "warning: |V3|/|V0| exceed eta_bar^3/2; first-order corrections are outside their credibility bound"
        );
    }
    if let Some(dir) = &args.out {
        ensure_out_dir(dir)?;
        fs::write(dir.join("price.csv"), &csv)?;
        let mut manifest = RunManifest::new("price");
        for (k, v) in [
            ("future_price", args.future_price),
            ("strike", args.strike),
            ("t0", args.t0),
            ("t", args.t),
            ("rate", args.rate),
            ("kappa", args.kappa),
            ("eta_bar", args.eta_bar),
            ("v3", args.v3),
            ("v0", args.v0),
        ] {
            manifest.push(k, v);
        }
        manifest.push("style", format!("{:?}", args.style).to_lowercase());
        manifest.write_to(dir)?;
    }
    Ok(0)
}

// --- surface ---

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[arg(long)]
    pub future_price: f64,
    /// Comma-separated option expiries in years.
    #[arg(long, value_delimiter = ',')]
    pub t0s: Vec<f64>,
    /// Comma-separated future expiries, same length as --t0s.
    #[arg(long, value_delimiter = ',')]
    pub ts: Vec<f64>,
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    pub lmmr_min: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub lmmr_max: f64,
    #[arg(long, default_value_t = 41)]
    pub n_strikes: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub rate: f64,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub eta_bar: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub v3: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub v0: f64,
    /// Also write one smile plot per maturity.
    #[arg(long)]
    pub svg: bool,
    #[arg(long, default_value = "surface_out")]
    pub out: PathBuf,
}

/// Writes the smile grid `(T0, T, K, lmmr, iv_approx, iv_from_price_total)`.
pub fn cmd_surface(args: &SurfaceArgs) -> Result<i32> {
    if args.t0s.is_empty() || args.t0s.len() != args.ts.len() {
        return Err(FutVolError::invalid(
            "--t0s and --ts must be non-empty lists of equal length",
        ));
    }
    if args.n_strikes < 1 || args.lmmr_max < args.lmmr_min {
        return Err(FutVolError::invalid("empty strike grid"));
    }
    let gmp = GroupMarketParams::new(args.kappa, args.eta_bar, args.v3, args.v0)?;
    ensure_out_dir(&args.out)?;

    let mut csv = String::from("t0,t,strike,lmmr,iv_approx,iv_from_price_total\n");
    for (idx, (&t0, &t)) in args.t0s.iter().zip(&args.ts).enumerate() {
        let mut approx_series = Vec::new();
        let mut priced_series = Vec::new();
        for i in 0..args.n_strikes {
            let frac = if args.n_strikes == 1 {
                0.5
            } else {
                i as f64 / (args.n_strikes - 1) as f64
            };
            let x = args.lmmr_min + frac * (args.lmmr_max - args.lmmr_min);
            let strike = args.future_price * (x * t0).exp();
            let iv_affine = iv_approx(x, t0, t, &gmp)?;
            let vanilla = VanillaSpec::new(OptionStyle::Call, strike, t0, t, args.rate)?;
            let total = price_total(args.future_price, &vanilla, &gmp, 0.0)?.total;
            let iv_priced = implied_vol(
                OptionStyle::Call,
                total,
                args.future_price,
                strike,
                t0,
                args.rate,
            )?;
            let _ = writeln!(csv, "{t0},{t},{strike},{x},{iv_affine},{iv_priced}");
            approx_series.push((x, iv_affine));
            priced_series.push((x, iv_priced));
        }
        if args.svg {
            let plot = render(
                &format!("smile T0={t0:.4} T={t:.4}"),
                "lmmr",
                "implied vol",
                &[
                    Series {
                        label: "affine expansion".to_string(),
                        points: approx_series,
                        kind: SeriesKind::Line,
                    },
                    Series {
                        label: "first-order price".to_string(),
                        points: priced_series,
                        kind: SeriesKind::Markers,
                    },
                ],
            );
            fs::write(args.out.join(format!("smile_{idx:02}.svg")), plot)?;
        }
    }
    fs::write(args.out.join("surface.csv"), &csv)?;
    let mut manifest = RunManifest::new("surface");
    manifest.push("future_price", args.future_price);
    manifest.push(
        "t0s",
        args.t0s
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.push(
        "ts",
        args.ts
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.push("lmmr_min", args.lmmr_min);
    manifest.push("lmmr_max", args.lmmr_max);
    manifest.push("n_strikes", args.n_strikes);
    manifest.push("rate", args.rate);
    manifest.push("kappa", args.kappa);
    manifest.push("eta_bar", args.eta_bar);
    manifest.push("v3", args.v3);
    manifest.push("v0", args.v0);
    manifest.push("svg", args.svg);
    manifest.write_to(&args.out)?;
    Ok(0)
}

// --- calibrate ---

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Quote-panel CSV (schema: future_days,future_price,option_days,strike,kind,value).
    #[arg(long)]
    pub panel: PathBuf,
    /// Drop smiles with option maturity below this many days.
    #[arg(long)]
    pub min_t0_days: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub init_kappa: f64,
    #[arg(long)]
    pub init_b0: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DAY_COUNT)]
    pub day_count: f64,
    /// Rate used when inverting price quotes.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub rate: f64,
    #[arg(long, default_value = "calibration_out")]
    pub out: PathBuf,
}

/// Runs the staged calibration and writes result, per-smile report and
/// residual plot.
pub fn cmd_calibrate(args: &CalibrateArgs, stdout: &mut impl std::io::Write) -> Result<i32> {
    let outcome = load_panel(&args.panel, args.day_count, args.rate)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let options = CalibrationOptions {
        min_option_expiry: args.min_t0_days.map(|d| d / args.day_count),
        init_kappa: args.init_kappa,
        init_b0: args.init_b0,
    };
    let result = calibrate(&outcome.panel, &options)?;

    ensure_out_dir(&args.out)?;
    let mut csv = String::from(
        "kappa_hat,eta_bar_hat,v3eps_hat,v0delta_hat,a0_hat,a1_hat,b0_hat,stage2_objective,stage3_objective,expansion_credible\n",
    );
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{}",
        result.kappa_hat,
        result.eta_bar_hat,
        result.v3eps_hat,
        result.v0delta_hat,
        result.a0_hat,
        result.a1_hat,
        result.b0_hat,
        result.stage2_objective,
        result.stage3_objective,
        result.expansion_credible
    );
    fs::write(args.out.join("calibration.csv"), &csv)?;
    stdout.write_all(csv.as_bytes())?;
    if !result.expansion_credible {
        eprintln!(
            "warning: fitted corrections exceed eta_bar^3/2; the first-order expansion is stretched"
        );
    }

    // Per-smile fit report and residual plot against the fitted smile.
    let panel = match options.min_option_expiry {
        Some(min_t0) => outcome.panel.filter_min_option_expiry(min_t0)?,
        None => outcome.panel,
    };
    let gmp = result.group_params()?;
    let mut report = String::from("t0,t,future_price,n_quotes,max_abs_residual\n");
    let mut residual_points = Vec::new();
    for smile in panel.smiles() {
        let mut max_resid: f64 = 0.0;
        for (&k, &iv) in smile.strikes.iter().zip(&smile.ivs) {
            let x = lmmr(k, smile.future_price, smile.option_expiry);
            let fitted = iv_approx(x, smile.option_expiry, smile.future_expiry, &gmp)?;
            let resid = iv - fitted;
            max_resid = max_resid.max(resid.abs());
            residual_points.push((x, resid));
        }
        let _ = writeln!(
            report,
            "{},{},{},{},{}",
            smile.option_expiry,
            smile.future_expiry,
            smile.future_price,
            smile.strikes.len(),
            max_resid
        );
    }
    fs::write(args.out.join("smile_fits.csv"), &report)?;
    let plot = render(
        "iv residuals vs fitted affine smile",
        "lmmr",
        "market iv - fitted iv",
        &[Series {
            label: "residuals".to_string(),
            points: residual_points,
            kind: SeriesKind::Markers,
        }],
    );
    fs::write(args.out.join("residuals.svg"), plot)?;

    let mut manifest = RunManifest::new("calibrate");
    manifest.push("panel", args.panel.display());
    manifest.push(
        "min_t0_days",
        args.min_t0_days
            .map_or("none".to_string(), |v| v.to_string()),
    );
    manifest.push("init_kappa", args.init_kappa);
    manifest.push(
        "init_b0",
        args.init_b0.map_or("auto".to_string(), |v| v.to_string()),
    );
    manifest.push("day_count", args.day_count);
    manifest.push("rate", args.rate);
    manifest.write_to(&args.out)?;
    Ok(0)
}

// --- validate ---

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Model config file (key=value); defaults to the built-in lab model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated eps values; each rung runs with delta = eps.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.05, 0.01])]
    pub ladder: Vec<f64>,
    /// Outer Monte-Carlo paths per rung.
    #[arg(long, default_value_t = 200_000)]
    pub paths: usize,
    /// Inner paths per outer path.
    #[arg(long, default_value_t = 1000)]
    pub inner: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Option expiry of the probe call.
    #[arg(long, default_value_t = 0.25)]
    pub t0: f64,
    /// Future expiry of the probe call; defaults to t0 + 1 month.
    #[arg(long)]
    pub t: Option<f64>,
    /// Strike; defaults to the model's zero-order ATM forward.
    #[arg(long)]
    pub strike: Option<f64>,
    #[arg(long, default_value = "validate_out")]
    pub out: PathBuf,
}

/// Runs the accuracy ladder; exit 3 when the fitted slope leaves
/// `SLOPE_BAND` or any rung is statistically inconclusive.
pub fn cmd_validate(args: &ValidateArgs, stdout: &mut impl std::io::Write) -> Result<i32> {
    let spec = match &args.model {
        Some(path) => parse_model_config(&fs::read_to_string(path)?)?,
        None => ModelSpec::default_lab(),
    };
    if args.ladder.is_empty() {
        return Err(FutVolError::invalid("ladder must not be empty"));
    }
    let t_fut = args.t.unwrap_or(args.t0 + 1.0 / 12.0);
    let strike = match args.strike {
        Some(k) => k,
        None => {
            let curve = crate::simlab::implied_curve_params(&spec)?;
            crate::futures_curve::h0(&curve, 0.0, spec.u0, t_fut)?
        }
    };
    let vanilla = VanillaSpec::new(OptionStyle::Call, strike, args.t0, t_fut, spec.rate)?;
    let ladder: Vec<(f64, f64)> = args.ladder.iter().map(|&e| (e, e)).collect();
    let result = accuracy_sweep(
        &spec,
        &vanilla,
        &ladder,
        SweepBudget {
            n_outer: args.paths,
            n_inner: args.inner,
        },
        args.seed,
    )?;

    let mut csv = String::from("eps,delta,mc_price,mc_se,approx_price,abs_error\n");
    for r in &result.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.eps, r.delta, r.mc_price, r.mc_se, r.approx_price, r.abs_error
        );
    }
    ensure_out_dir(&args.out)?;
    fs::write(args.out.join("results.csv"), &csv)?;
    stdout.write_all(csv.as_bytes())?;

    let mut summary = String::new();
    let slope_text = result.slope.map_or(String::new(), |s| s.to_string());
    let _ = writeln!(summary, "slope={slope_text}");
    let mut inconclusive = 0usize;
    for r in &result.rows {
        if !r.conclusive {
            inconclusive += 1;
            let _ = writeln!(
                summary,
                "rung eps={} delta={}: inconclusive (mc se {} >= measured error {})",
                r.eps, r.delta, r.mc_se, r.abs_error
            );
        }
    }
    fs::write(args.out.join("summary.txt"), &summary)?;
    stdout.write_all(summary.as_bytes())?;

    let mut manifest = RunManifest::new("validate");
    manifest.push(
        "model",
        args.model
            .as_ref()
            .map_or("builtin".to_string(), |p| p.display().to_string()),
    );
    manifest.push(
        "ladder",
        args.ladder
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.push("paths", args.paths);
    manifest.push("inner", args.inner);
    manifest.push("seed", args.seed);
    manifest.push("t0", args.t0);
    manifest.push("t", t_fut);
    manifest.push("strike", strike);
    manifest.write_to(&args.out)?;

    // Exit-code contract: a single-rung ladder has no slope and that is
    // fine; otherwise the slope must exist, sit in the band, and every rung
    // must be conclusive.
    if args.ladder.len() == 1 {
        return Ok(if inconclusive > 0 { 3 } else { 0 });
    }
    match result.slope {
        Some(s) if (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&s) && inconclusive == 0 => Ok(0),
        _ => Ok(3),
    }
}

/// Parses the plain-text `key=value` model config. Unknown keys are errors;
/// missing keys fall back to the built-in lab model (see README for the
/// key list).
pub fn parse_model_config(text: &str) -> Result<ModelSpec> {
    let mut spec = ModelSpec::default_lab();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| FutVolError::Parse {
            line: idx + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse().map_err(|e| FutVolError::Parse {
                line: idx + 1,
                message: format!("{key}: {e}"),
            })
        };
        match key {
            "kappa" => spec.kappa = parse_f64(value)?,
            "long_run_mean" => spec.long_run_mean = parse_f64(value)?,
            "u0" => spec.u0 = parse_f64(value)?,
            "fast_mean" => spec.fast_mean = parse_f64(value)?,
            "fast_sd" => spec.fast_sd = parse_f64(value)?,
            "y0" => spec.y0 = parse_f64(value)?,
            "eps" => spec.eps = parse_f64(value)?,
            "slow_rate" => spec.slow_rate = parse_f64(value)?,
            "slow_mean" => spec.slow_mean = parse_f64(value)?,
            "slow_vol" => spec.slow_vol = parse_f64(value)?,
            "z0" => spec.z0 = parse_f64(value)?,
            "delta" => spec.delta = parse_f64(value)?,
            "rho1" => spec.rho1 = parse_f64(value)?,
            "rho2" => spec.rho2 = parse_f64(value)?,
            "rho12" => spec.rho12 = parse_f64(value)?,
            "rate" => spec.rate = parse_f64(value)?,
            "eta" => {
                spec.vol_map = if value == "z_exp_y" {
                    VolMap::ZExpY
                } else if let Some(level) = value.strip_prefix("const:") {
                    VolMap::Constant {
                        level: parse_f64(level)?,
                    }
                } else {
                    return Err(FutVolError::Parse {
                        line: idx + 1,
                        message: format!("eta must be z_exp_y or const:<level>, got {value:?}"),
                    });
                }
            }
            _ => {
                return Err(FutVolError::Parse {
                    line: idx + 1,
                    message: format!("unknown key {key:?}"),
                })
            }
        }
    }
    spec.seasonality = Seasonality::None;
    spec.validate()?;
    Ok(spec)
}
