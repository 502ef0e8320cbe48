//! Multi-site peaks-over-threshold extreme-value modelling.
//!
//! Given per-tide series from a handful of gauges, this crate fits extended
//! generalized Pareto (EGP) margins with an automatic convexity-based
//! threshold, standardizes to Pareto or exponential scale, and predicts the
//! target station's extremes from the covariate stations' exceedances by
//! two routes:
//!
//! - **angular regression** ([`roxane`]): a regressor trained on the
//!   covariate angle predicts the target angle, back-transformed through
//!   the covariate radius;
//! - **MGP distribution regression** ([`mgpred`]): a standard multivariate
//!   generalized Pareto density family is fitted by censored maximum
//!   likelihood, and predictions are Monte-Carlo averages of conditional
//!   rejection samples with percentile prediction intervals.
//!
//! Data-parallel loops (per-station fits, per-row prediction, forest
//! growth) run through rayon when the default `parallel` feature is on and
//! sequentially otherwise.

pub mod egp;
pub mod error;
pub mod exec;
pub mod forest;
pub mod io;
pub mod metrics;
pub mod mgpred;
pub mod numeric;
pub mod optim;
pub mod preprocess;
pub mod roxane;
pub mod synth;
pub mod transforms;

pub use error::{Error, Result};
