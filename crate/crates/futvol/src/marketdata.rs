//! Option-chain ingestion: CSV quotes to a validated [`QuotePanel`], plus
//! synthetic panel generation for round-trip experiments.
//!
//! CSV schema (exact header, comma separated, `.` decimal):
//!
//! ```text
//! future_days,future_price,option_days,strike,kind,value
//! ```
//!
//! `kind` is `iv`, `call_price` or `put_price`. Maturities are calendar days
//! and are converted at a configurable day count (default 365). Price quotes
//! are inverted to Black implied volatilities at load time so every
//! downstream stage sees one homogeneous panel; rows whose price sits on or
//! outside the open no-arbitrage band are dropped with a per-row warning.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::black76::{implied_vol, OptionStyle};
use crate::error::{ensure_positive, FutVolError, Result};
use crate::pricing::GroupMarketParams;
use crate::smile::{iv_approx, lmmr, LmmrPoint};

/// Default days-per-year conversion.
pub const DEFAULT_DAY_COUNT: f64 = 365.0;

const HEADER: &str = "future_days,future_price,option_days,strike,kind,value";

/// How a quote's `value` field is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuoteKind {
    Iv,
    CallPrice,
    PutPrice,
}

impl QuoteKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "iv" => Some(QuoteKind::Iv),
            "call_price" => Some(QuoteKind::CallPrice),
            "put_price" => Some(QuoteKind::PutPrice),
            _ => None,
        }
    }
}

/// One parsed CSV row, before validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawQuoteRow {
    pub future_days: u32,
    pub future_price: f64,
    pub option_days: u32,
    pub strike: f64,
    pub kind: QuoteKind,
    pub value: f64,
}

/// One smile: a future, an option expiry on it, and the quoted strikes.
#[derive(Debug, Clone, PartialEq)]
pub struct Smile {
    pub future_expiry: f64,
    pub future_price: f64,
    pub option_expiry: f64,
    pub strikes: Vec<f64>,
    pub ivs: Vec<f64>,
}

impl Smile {
    /// The smile in its affine coordinate.
    pub fn lmmr_points(&self) -> Vec<LmmrPoint> {
        self.strikes
            .iter()
            .zip(&self.ivs)
            .map(|(&k, &iv)| LmmrPoint {
                lmmr: lmmr(k, self.future_price, self.option_expiry),
                iv,
            })
            .collect()
    }

    fn distinct_strikes(&self) -> usize {
        let mut sorted = self.strikes.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        sorted.len()
    }

    fn validate(&self, min_strikes: usize) -> Result<()> {
        ensure_positive(self.future_price, "future price")?;
        if !(self.option_expiry > 0.0 && self.option_expiry < self.future_expiry) {
            return Err(FutVolError::invalid(format!(
                "smile needs 0 < T0 < T, got T0={}, T={}",
                self.option_expiry, self.future_expiry
            )));
        }
        if self.strikes.len() != self.ivs.len() {
            return Err(FutVolError::invalid("strike/iv length mismatch"));
        }
        if self.distinct_strikes() < min_strikes {
            return Err(FutVolError::invalid(format!(
                "smile needs at least {min_strikes} distinct strikes, got {}",
                self.distinct_strikes()
            )));
        }
        for (&k, &iv) in self.strikes.iter().zip(&self.ivs) {
            ensure_positive(k, "strike")?;
            ensure_positive(iv, "implied vol")?;
        }
        Ok(())
    }
}

/// A validated set of smiles, the calibration input.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotePanel {
    smiles: Vec<Smile>,
}

impl QuotePanel {
    /// Standard construction: every smile needs at least 3 distinct strikes.
    pub fn new(smiles: Vec<Smile>) -> Result<Self> {
        Self::with_min_strikes(smiles, 3)
    }

    /// Override for two-point smiles (stage-1 regressions then interpolate
    /// exactly instead of being overdetermined).
    pub fn allowing_two_point_smiles(smiles: Vec<Smile>) -> Result<Self> {
        Self::with_min_strikes(smiles, 2)
    }

    fn with_min_strikes(smiles: Vec<Smile>, min_strikes: usize) -> Result<Self> {
        if smiles.is_empty() {
            return Err(FutVolError::EmptyPanel);
        }
        for smile in &smiles {
            smile.validate(min_strikes)?;
        }
        Ok(QuotePanel { smiles })
    }

    pub fn smiles(&self) -> &[Smile] {
        &self.smiles
    }

    pub fn quote_count(&self) -> usize {
        self.smiles.iter().map(|s| s.strikes.len()).sum()
    }

    /// Panel restricted to smiles with `T0 >= min_option_expiry` (years).
    pub fn filter_min_option_expiry(&self, min_option_expiry: f64) -> Result<QuotePanel> {
        let kept: Vec<Smile> = self
            .smiles
            .iter()
            .filter(|s| s.option_expiry >= min_option_expiry)
            .cloned()
            .collect();
        QuotePanel::new(kept)
    }
}

/// A loaded panel plus the per-row warnings produced while filtering.
#[derive(Debug)]
pub struct LoadOutcome {
    pub panel: QuotePanel,
    pub warnings: Vec<String>,
}

fn parse_row(line_no: usize, line: &str) -> Result<RawQuoteRow> {
    let err = |message: String| FutVolError::Parse {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(err(format!("expected 6 fields, got {}", fields.len())));
    }
    let future_days: u32 = fields[0]
        .parse()
        .map_err(|e| err(format!("future_days: {e}")))?;
    let future_price: f64 = fields[1]
        .parse()
        .map_err(|e| err(format!("future_price: {e}")))?;
    let option_days: u32 = fields[2]
        .parse()
        .map_err(|e| err(format!("option_days: {e}")))?;
    let strike: f64 = fields[3].parse().map_err(|e| err(format!("strike: {e}")))?;
    let kind = QuoteKind::parse(fields[4]).ok_or_else(|| {
        err(format!(
            "kind must be iv|call_price|put_price, got {:?}",
            fields[4]
        ))
    })?;
    let value: f64 = fields[5].parse().map_err(|e| err(format!("value: {e}")))?;
    if option_days > future_days {
        return Err(err(format!(
            "option_days {option_days} exceeds future_days {future_days}"
        )));
    }
    Ok(RawQuoteRow {
        future_days,
        future_price,
        option_days,
        strike,
        kind,
        value,
    })
}

/// Loads a chain CSV into a panel, converting maturities at `day_count`
/// days per year and inverting price quotes to implied vols at rate `rate`.
pub fn load_panel(path: impl AsRef<Path>, day_count: f64, rate: f64) -> Result<LoadOutcome> {
    ensure_positive(day_count, "day_count")?;
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end() == HEADER => {}
        Some((_, first)) => {
            return Err(FutVolError::Parse {
                line: 1,
                message: format!("header must be {HEADER:?}, got {:?}", first.trim_end()),
            })
        }
        None => return Err(FutVolError::EmptyPanel),
    }

    let mut warnings = Vec::new();
    // Key (future_days, option_days): deterministic smile order.
    let mut groups: std::collections::BTreeMap<(u32, u32), Smile> = Default::default();
    // One price per future, across all of its option maturities.
    let mut future_prices: std::collections::BTreeMap<u32, f64> = Default::default();

    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(line_no, line)?;
        if let Some(&seen) = future_prices.get(&row.future_days) {
            if seen != row.future_price {
                return Err(FutVolError::Parse {
                    line: line_no,
                    message: format!(
                        "future price {} disagrees with {} seen earlier for the {}-day future",
                        row.future_price, seen, row.future_days
                    ),
                });
            }
        } else {
            future_prices.insert(row.future_days, row.future_price);
        }
        if row.strike <= 0.0 || !row.strike.is_finite() {
            warnings.push(format!(
                "line {line_no}: dropped, strike {} not positive",
                row.strike
            ));
            continue;
        }
        if row.future_price <= 0.0 || !row.future_price.is_finite() {
            warnings.push(format!(
                "line {line_no}: dropped, future price {} not positive",
                row.future_price
            ));
            continue;
        }
        if row.option_days == row.future_days {
            warnings.push(format!(
                "line {line_no}: dropped, option and future expire the same day"
            ));
            continue;
        }
        let t0 = f64::from(row.option_days) / day_count;
        let iv = match row.kind {
            QuoteKind::Iv => {
                if row.value > 0.0 && row.value.is_finite() {
                    row.value
                } else {
                    warnings.push(format!(
                        "line {line_no}: dropped, iv {} not positive",
                        row.value
                    ));
                    continue;
                }
            }
            QuoteKind::CallPrice | QuoteKind::PutPrice => {
                let style = if row.kind == QuoteKind::CallPrice {
                    OptionStyle::Call
                } else {
                    OptionStyle::Put
                };
                match implied_vol(style, row.value, row.future_price, row.strike, t0, rate) {
                    Ok(iv) => iv,
                    Err(e) => {
                        warnings.push(format!("line {line_no}: dropped, {e}"));
                        continue;
                    }
                }
            }
        };
        let smile = groups
            .entry((row.future_days, row.option_days))
            .or_insert_with(|| Smile {
                future_expiry: f64::from(row.future_days) / day_count,
                future_price: row.future_price,
                option_expiry: t0,
                strikes: Vec::new(),
                ivs: Vec::new(),
            });
        smile.strikes.push(row.strike);
        smile.ivs.push(iv);
    }

    let mut smiles = Vec::new();
    for ((fd, od), mut smile) in groups {
        // Canonical strike order inside a smile.
        let mut paired: Vec<(f64, f64)> = smile
            .strikes
            .iter()
            .copied()
            .zip(smile.ivs.iter().copied())
            .collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        smile.strikes = paired.iter().map(|p| p.0).collect();
        smile.ivs = paired.iter().map(|p| p.1).collect();
        if smile.distinct_strikes() < 3 {
            warnings.push(format!(
                "smile (future {fd}d, option {od}d): dropped, fewer than 3 distinct strikes"
            ));
            continue;
        }
        smiles.push(smile);
    }
    if smiles.is_empty() {
        return Err(FutVolError::EmptyPanel);
    }
    Ok(LoadOutcome {
        panel: QuotePanel::new(smiles)?,
        warnings,
    })
}

/// Writes a panel back in the chain schema, with `kind=iv` rows. Maturities
/// must be aligned to the day grid of `day_count`.
pub fn save_panel(panel: &QuotePanel, path: impl AsRef<Path>, day_count: f64) -> Result<()> {
    ensure_positive(day_count, "day_count")?;
    let mut out = String::from(HEADER);
    out.push('\n');
    for smile in panel.smiles() {
        let fd = to_days(smile.future_expiry, day_count)?;
        let od = to_days(smile.option_expiry, day_count)?;
        for (&k, &iv) in smile.strikes.iter().zip(&smile.ivs) {
            writeln!(out, "{fd},{},{od},{k},iv,{iv}", smile.future_price).expect("string write");
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn to_days(years: f64, day_count: f64) -> Result<u32> {
    let days = years * day_count;
    let rounded = days.round();
    if (days - rounded).abs() > 1e-6 || rounded < 0.0 {
        return Err(FutVolError::invalid(format!(
            "maturity {years}y is not aligned to the {day_count}-day year grid"
        )));
    }
    Ok(rounded as u32)
}

/// Layout of a synthetic panel: one smile per option maturity, each on a
/// future expiring `gap_days` later, strikes equally spaced in LMMR.
#[derive(Debug, Clone)]
pub struct SynthPanelSpec {
    pub future_price: f64,
    pub option_days: Vec<u32>,
    pub gap_days: u32,
    pub n_strikes: usize,
    pub lmmr_min: f64,
    pub lmmr_max: f64,
    /// Gaussian iv noise, standard deviation in vol units.
    pub noise_sd: Option<f64>,
    pub seed: u64,
    pub day_count: f64,
}

impl Default for SynthPanelSpec {
    fn default() -> Self {
        SynthPanelSpec {
            future_price: 100.0,
            option_days: vec![60, 90, 120, 180, 270, 365],
            gap_days: 30,
            n_strikes: 41,
            lmmr_min: -0.5,
            lmmr_max: 0.5,
            noise_sd: None,
            seed: 0,
            day_count: DEFAULT_DAY_COUNT,
        }
    }
}

/// Generates a panel whose implied vols follow the affine first-order smile
/// exactly (plus optional seeded Gaussian noise).
pub fn synth_panel(gmp: &GroupMarketParams, spec: &SynthPanelSpec) -> Result<QuotePanel> {
    ensure_positive(spec.future_price, "future_price")?;
    if spec.n_strikes < 2 || spec.lmmr_max <= spec.lmmr_min {
        return Err(FutVolError::invalid(
            "need n_strikes >= 2 and lmmr_max > lmmr_min",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut smiles = Vec::new();
    for &od in &spec.option_days {
        let t0 = f64::from(od) / spec.day_count;
        let t = f64::from(od + spec.gap_days) / spec.day_count;
        let mut strikes = Vec::with_capacity(spec.n_strikes);
        let mut ivs = Vec::with_capacity(spec.n_strikes);
        for i in 0..spec.n_strikes {
            let frac = i as f64 / (spec.n_strikes - 1) as f64;
            let lmmr = spec.lmmr_min + frac * (spec.lmmr_max - spec.lmmr_min);
            let mut iv = iv_approx(lmmr, t0, t, gmp)?;
            if let Some(sd) = spec.noise_sd {
                let z: f64 = StandardNormal.sample(&mut rng);
                iv += sd * z;
            }
            strikes.push(spec.future_price * (lmmr * t0).exp());
            ivs.push(iv);
        }
        smiles.push(Smile {
            future_expiry: t,
            future_price: spec.future_price,
            option_expiry: t0,
            strikes,
            ivs,
        });
    }
    QuotePanel::new(smiles)
}
