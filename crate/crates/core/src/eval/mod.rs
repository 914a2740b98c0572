//! Backtesting: metrics, benchmark forecasters, rolling-origin folds and reports.

mod backtest;
mod benchmark;
mod metrics;
mod report;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::forecast::ForecastError;

pub use crate::YearMonth;
pub use backtest::{
    run_backtest, AggregateSummary, BacktestProtocol, CellSummary, CurvePoint, EvalGrid, FoldOutcome, FoldRecord,
    ForecastRecord, Metrics,
};
pub use benchmark::{
    ingest_external_benchmark, naive_forecast, read_external_benchmark, ExternalBenchmark, ExternalForecast,
    WEEK_STEPS,
};
pub use metrics::{coverage_probability, mae, mse};
pub use report::{benchmarks_csv, curve_csv, folds_csv, overall_csv, records_csv, render_report, summary_csv};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sequences differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("no observed values left after filtering")]
    EmptyAfterFiltering,
    #[error("interval {0} has lower > upper")]
    InvalidInterval(usize),
    #[error("no value one week before the target of origin {origin}, horizon {horizon}")]
    MissingHistory { origin: DateTime<Utc>, horizon: usize },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("conflicting forecasts for {area} at {origin}, horizon {horizon}")]
    DuplicateKey {
        area: String,
        origin: DateTime<Utc>,
        horizon: usize,
    },
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("training data for {area} reaches {latest_target}, not before evaluation start {first_origin}")]
    Leakage {
        area: String,
        latest_target: DateTime<Utc>,
        first_origin: DateTime<Utc>,
    },
    #[error("evaluation grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
