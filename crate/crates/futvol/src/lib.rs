//! Pricing, smile expansion and calibration for European options on futures
//! over mean-reverting assets with multiscale stochastic volatility.
//!
//! The spot is an exponential Ornstein-Uhlenbeck process whose volatility is
//! driven by a fast and a slow stochastic factor. At first order, option
//! prices on the futures reduce to a Black price at a time-averaged
//! volatility plus two explicit Greek-operator corrections, and the implied
//! volatility becomes affine in the log-moneyness-to-maturity ratio (LMMR).
//! Everything the approximation needs is carried by four group market
//! parameters `(kappa, eta_bar, V3_eps, V0_delta)`, which are exactly what
//! the calibration recovers from an option panel.
//!
//! Module map:
//!
//! - [`weights`]: closed-form time-averaging weights and `sigma_bar`.
//! - [`black76`]: Black prices, `D_k` Greek operators, implied vol.
//! - [`futures_curve`]: first-order future-price curve and its inversion.
//! - [`pricing`]: the corrected option price `P0 + P10_eps + P01_delta`.
//! - [`smile`]: affine-in-LMMR implied-volatility expansion.
//! - [`calibration`]: three-stage least-squares fit of the group parameters.
//! - [`marketdata`]: option-chain CSV ingestion and synthetic panels.
//! - [`quadrature`]: invariant-measure averages behind the group parameters.
//! - [`simlab`]: full-model Monte-Carlo laboratory and accuracy sweeps.
//! - [`cli`]: batch commands used by the `futvol` binary.
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `cargo run --example price_breakdown`.

pub mod black76;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod futures_curve;
pub mod marketdata;
pub(crate) mod math;
pub mod pricing;
pub mod quadrature;
pub mod simlab;
pub mod smile;
pub(crate) mod svg;
pub mod weights;

pub use black76::{implied_vol, BlackInputs, GreekBundle, OptionStyle};
pub use calibration::{calibrate, CalibrationOptions, CalibrationResult};
pub use error::{FutVolError, Result};
pub use futures_curve::{Seasonality, SpotDynamicsParams};
pub use marketdata::{load_panel, save_panel, synth_panel, QuotePanel, Smile, SynthPanelSpec};
pub use pricing::{price_total, GroupMarketParams, PriceBreakdown, VanillaSpec};
pub use simlab::{
    accuracy_sweep, implied_group_params, mc_future_price, mc_option_price, simulate_paths,
    McEstimate, ModelSpec, SweepBudget, SweepResult, VolMap,
};
pub use smile::{iv_approx, smile_coefficients, LmmrPoint, SmileCoefficients};
pub use weights::{sigma_bar, weight_set, Tenor, WeightSet};
