//! Per-area, per-horizon model banks.
//!
//! Each area gets one independent forest per horizon, trained on relative
//! targets `I(t + h) - I(t)`. Forecasts add the current value back, so
//! points and interval endpoints come out in absolute MW.

mod io;

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{build_feature_vector, FeatureConfig, FeatureError, FeatureTable, TrainingMatrix};
use crate::qrf::{fit_forest, Forest, HyperParams, QrfError};
use crate::timeseries::{format_timestamp, ImbalanceSeries};

pub use io::{load_bank, read_bank, save_bank, write_bank, BANK_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("insufficient data for area {area}, horizon {horizon}: {reason}")]
    InsufficientData {
        area: String,
        horizon: usize,
        reason: String,
    },
    #[error("model bank does not cover area {0}")]
    AreaNotCovered(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Qrf(#[from] QrfError),
    #[error("unsupported bank format version {found} (this build reads {supported})")]
    VersionMismatch { found: u16, supported: u16 },
    #[error("corrupt bank file: {0}")]
    CorruptFile(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Forests for horizons `1..=config.horizons` of one area.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaModels {
    pub config: FeatureConfig,
    /// `forests[h - 1]` predicts horizon `h`.
    pub forests: Vec<Forest<f64>>,
}

impl AreaModels {
    pub fn forest(&self, horizon: usize) -> Option<&Forest<f64>> {
        horizon.checked_sub(1).and_then(|i| self.forests.get(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBank {
    pub(crate) areas: BTreeMap<String, AreaModels>,
    pub(crate) trained_on: (DateTime<Utc>, DateTime<Utc>),
    pub(crate) params: HyperParams,
    pub(crate) latest_target: DateTime<Utc>,
}

impl ModelBank {
    pub fn areas(&self) -> impl Iterator<Item = (&str, &AreaModels)> {
        self.areas.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn area(&self, id: &str) -> Option<&AreaModels> {
        self.areas.get(id)
    }

    pub fn forest(&self, area: &str, horizon: usize) -> Option<&Forest<f64>> {
        self.areas.get(area).and_then(|m| m.forest(horizon))
    }

    pub fn forest_count(&self) -> usize {
        self.areas.values().map(|m| m.forests.len()).sum()
    }

    /// Training window `[start, end)`.
    pub fn trained_on(&self) -> (DateTime<Utc>, DateTime<Utc>) {
        self.trained_on
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    /// Timestamp of the latest target value any forest was trained on.
    pub fn latest_target(&self) -> DateTime<Utc> {
        self.latest_target
    }

    pub fn format_version(&self) -> u16 {
        BANK_FORMAT_VERSION
    }

    /// Replaces one forest; used to refit a single horizon.
    pub fn replace_forest(&mut self, area: &str, horizon: usize, forest: Forest<f64>) -> Result<(), ForecastError> {
        let models = self
            .areas
            .get_mut(area)
            .ok_or_else(|| ForecastError::AreaNotCovered(area.to_string()))?;
        let slot = horizon
            .checked_sub(1)
            .and_then(|i| models.forests.get_mut(i))
            .ok_or(FeatureError::InvalidHorizon {
                horizon,
                max: models.config.horizons,
            })?;
        if forest.feature_dim() != models.config.feature_dim() {
            return Err(QrfError::DimensionMismatch {
                expected: models.config.feature_dim(),
                found: forest.feature_dim(),
            }
            .into());
        }
        *slot = forest;
        Ok(())
    }
}

/// One area's series and feature configuration.
#[derive(Debug, Clone, Copy)]
pub struct AreaInput<'a> {
    pub series: &'a ImbalanceSeries,
    pub config: &'a FeatureConfig,
}

/// Forest seed for `(area, horizon)`, so every model draws its own stream
/// and refitting one horizon reproduces it exactly.
pub fn model_seed(base: u64, area: &str, horizon: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((area.len() as u64).to_le_bytes());
    h.update(area.as_bytes());
    h.update((horizon as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Fits the forest for one `(area, horizon)` from a prebuilt feature table.
pub fn fit_horizon(
    table: &FeatureTable,
    series: &ImbalanceSeries,
    config: &FeatureConfig,
    horizon: usize,
    params: &HyperParams,
) -> Result<Forest<f64>, ForecastError> {
    fit_horizon_with_extent(table, series, config, horizon, params).map(|(f, _)| f)
}

fn fit_horizon_with_extent(
    table: &FeatureTable,
    series: &ImbalanceSeries,
    config: &FeatureConfig,
    horizon: usize,
    params: &HyperParams,
) -> Result<(Forest<f64>, DateTime<Utc>), ForecastError> {
    let insufficient = |reason: String| ForecastError::InsufficientData {
        area: series.area().to_string(),
        horizon,
        reason,
    };
    let matrix = match TrainingMatrix::from_table(table, series, horizon, config) {
        Ok(m) => m,
        Err(FeatureError::EmptyMatrix(_)) => return Err(insufficient("no complete training row".into())),
        Err(e) => return Err(e.into()),
    };
    if matrix.len() < params.min_leaf {
        return Err(insufficient(format!(
            "{} training rows, min_leaf is {}",
            matrix.len(),
            params.min_leaf
        )));
    }
    let p = HyperParams {
        seed: model_seed(params.seed, series.area(), horizon),
        ..*params
    };
    let latest = matrix.max_target_time().expect("matrix is non-empty");
    Ok((fit_forest(&matrix.data, &p)?, latest))
}

/// Trains every `(area, horizon)` forest on the data inside `[window.0, window.1)`.
pub fn train_bank(
    inputs: &[AreaInput<'_>],
    window: (DateTime<Utc>, DateTime<Utc>),
    params: &HyperParams,
) -> Result<ModelBank, ForecastError> {
    params.validate()?;
    if inputs.is_empty() {
        return Err(ForecastError::InvalidInput("no areas to train".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for input in inputs {
        input.config.validate()?;
        if !seen.insert(input.series.area()) {
            return Err(ForecastError::InvalidInput(format!(
                "area {} given twice",
                input.series.area()
            )));
        }
    }
    let prepared: Vec<(ImbalanceSeries, FeatureTable)> = inputs
        .par_iter()
        .map(|input| {
            let area = input.series.area();
            let slice = input
                .series
                .clip(window.0, window.1)
                .filter(|s| s.present_count() > 0)
                .ok_or_else(|| ForecastError::InsufficientData {
                    area: area.to_string(),
                    horizon: 1,
                    reason: "no data inside the training window".into(),
                })?;
            let table = FeatureTable::build(&slice, input.config);
            Ok((slice, table))
        })
        .collect::<Result<_, ForecastError>>()?;

    let jobs: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(a, input)| (1..=input.config.horizons).map(move |h| (a, h)))
        .collect();
    let fitted: Vec<(Forest<f64>, DateTime<Utc>)> = jobs
        .par_iter()
        .map(|&(a, h)| {
            let (slice, table) = &prepared[a];
            fit_horizon_with_extent(table, slice, inputs[a].config, h, params)
        })
        .collect::<Result<_, ForecastError>>()?;
    let latest_target = fitted.iter().map(|(_, t)| *t).max().expect("at least one job");
    let forests = fitted.into_iter().map(|(f, _)| f);

    let mut areas = BTreeMap::new();
    let mut it = forests;
    for input in inputs {
        let forests: Vec<_> = it.by_ref().take(input.config.horizons).collect();
        areas.insert(
            input.series.area().to_string(),
            AreaModels {
                config: input.config.clone(),
                forests,
            },
        );
    }
    Ok(ModelBank {
        areas,
        trained_on: window,
        params: *params,
        latest_target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonForecast {
    pub horizon: usize,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub median: f64,
}

/// All horizons for one area and origin, in absolute MW.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSheet {
    pub area: String,
    pub origin: DateTime<Utc>,
    pub reference_value: f64,
    pub coverage_level: f64,
    pub entries: Vec<HorizonForecast>,
}

pub fn make_forecast(
    bank: &ModelBank,
    series: &ImbalanceSeries,
    t: DateTime<Utc>,
    coverage: f64,
) -> Result<ForecastSheet, ForecastError> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(QrfError::InvalidCoverage(coverage).into());
    }
    let models = bank
        .area(series.area())
        .ok_or_else(|| ForecastError::AreaNotCovered(series.area().to_string()))?;
    let x = build_feature_vector(series, t, &models.config)?;
    let now = x.reference_value;
    let entries = models
        .forests
        .iter()
        .enumerate()
        .map(|(i, forest)| {
            let p = forest.predict(&x.values, coverage)?;
            Ok(HorizonForecast {
                horizon: i + 1,
                point: now + p.mean,
                lower: now + p.lower,
                upper: now + p.upper,
                median: now + p.median,
            })
        })
        .collect::<Result<_, QrfError>>()?;
    Ok(ForecastSheet {
        area: series.area().to_string(),
        origin: t,
        reference_value: now,
        coverage_level: coverage,
        entries,
    })
}

pub const FORECAST_CSV_HEADER: &str = "area,origin_utc,horizon_steps,point_mw,pi_lower_mw,pi_upper_mw,coverage_level";

/// Writes sheets in the forecast CSV schema; `with_median` appends a
/// `median_mw` column.
pub fn write_forecast_csv<W: Write>(sheets: &[ForecastSheet], with_median: bool, mut out: W) -> std::io::Result<()> {
    write!(out, "{FORECAST_CSV_HEADER}")?;
    if with_median {
        write!(out, ",median_mw")?;
    }
    writeln!(out)?;
    for s in sheets {
        let origin = format_timestamp(s.origin);
        for e in &s.entries {
            write!(
                out,
                "{},{},{},{},{},{},{}",
                s.area, origin, e.horizon, e.point, e.lower, e.upper, s.coverage_level
            )?;
            if with_median {
                write!(out, ",{}", e.median)?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
