//! Probabilistic multi-horizon forecasting of 5-minute power imbalances.
//!
//! The pipeline: [`timeseries`] ingests grid-aligned imbalance series,
//! [`features`] turns them into lag/calendar/solar predictors with targets
//! relative to the current value, [`qrf`] fits quantile regression forests,
//! [`forecast`] manages one forest per (area, horizon) and converts
//! predictions back to absolute MW, and [`eval`] runs rolling-origin
//! backtests against naive and external benchmarks. [`synth`] generates
//! seedable test data.
//!
//! The forest and the metrics are generic over [`Scalar`] (`f32`/`f64`);
//! the aliases below fix the `f64` instantiation used by the pipeline.

pub mod eval;
pub mod features;
pub mod forecast;
pub mod qrf;
mod scalar;
pub mod synth;
pub mod timeseries;
mod util;

pub use util::{write_atomic, YearMonth};

pub use scalar::Scalar;

pub type Forest = qrf::Forest<f64>;
pub type Forest32 = qrf::Forest<f32>;
pub type Dataset = qrf::Dataset<f64>;
pub type TargetDistribution = qrf::WeightedTargetDistribution<f64>;
pub type Prediction = qrf::Prediction<f64>;
