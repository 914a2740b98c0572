//! Predictor vectors and relative targets.
//!
//! Layout (layout version 1, shown for the default `lag_count = 24`):
//!
//! | slots   | meaning                                              |
//! |---------|------------------------------------------------------|
//! | 0..24   | `I(t - d) - I(t)` for `d = 1..=24`                   |
//! | 24      | `I(t)` (absolute, MW)                                |
//! | 25..29  | local month 1-12, weekday 0-6 (Mon = 0), hour, minute |
//! | 29..37  | sin/cos pairs of month/12, weekday/7, hour/24, minute/60 |
//! | 37      | holiday flag (local date in calendar)                |
//! | 38      | solar elevation, degrees                             |
//!
//! Targets are `I(t + h) - I(t)`; adding the reference value `I(t)` back
//! recovers the absolute imbalance.

mod calendar;
mod solar;

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qrf::Dataset;
use crate::timeseries::{ImbalanceSeries, MarketArea, STEP_SECONDS};

pub use calendar::{
    load_holiday_calendar, norwegian_holidays, parse_holiday_calendar, BUILTIN_NORWEGIAN_CALENDAR,
};
pub use solar::solar_elevation;

pub const LAYOUT_VERSION: u32 = 1;

/// Slots that follow the lag block: absolute value, 4 raw temporals,
/// 4 sin/cos pairs, holiday flag, solar elevation.
pub const NON_LAG_SLOTS: usize = 15;

pub const DEFAULT_LAGS: usize = 24;
pub const DEFAULT_HORIZONS: usize = 24;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("missing data at origin {origin} for lag offsets {offsets:?}")]
    MissingLagData {
        origin: DateTime<Utc>,
        offsets: Vec<usize>,
    },
    #[error("origin {0} has no full lag window inside the series")]
    OutOfSeriesRange(DateTime<Utc>),
    #[error("cyclic period must be positive, got {0}")]
    NonPositivePeriod(f64),
    #[error("invalid holiday calendar: {0}")]
    InvalidCalendar(String),
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("horizon {horizon} outside 1..={max}")]
    InvalidHorizon { horizon: usize, max: usize },
    #[error("no complete training row for horizon {0}")]
    EmptyMatrix(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub lag_count: usize,
    pub horizons: usize,
    pub holidays: BTreeSet<NaiveDate>,
    pub latitude: f64,
    pub longitude: f64,
    pub timezone: Tz,
}

impl FeatureConfig {
    /// Default lags and horizons for `area` with an explicit calendar.
    pub fn new(area: &MarketArea, holidays: BTreeSet<NaiveDate>) -> Result<Self, FeatureError> {
        let timezone: Tz = area
            .timezone_id
            .parse()
            .map_err(|_| FeatureError::InvalidConfig(format!("unknown timezone {}", area.timezone_id)))?;
        let config = Self {
            lag_count: DEFAULT_LAGS,
            horizons: DEFAULT_HORIZONS,
            holidays,
            latitude: area.latitude,
            longitude: area.longitude,
            timezone,
        };
        config.validate()?;
        Ok(config)
    }

    /// Resolves the area's holiday calendar id (relative to `base_dir`).
    pub fn for_area(area: &MarketArea, base_dir: Option<&Path>) -> Result<Self, FeatureError> {
        let holidays = load_holiday_calendar(&area.holiday_calendar_id, base_dir)?;
        Self::new(area, holidays)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.lag_count == 0 || self.horizons == 0 {
            return Err(FeatureError::InvalidConfig(
                "lag_count and horizons must be at least 1".into(),
            ));
        }
        if !(-90.0..=90.0).contains(&self.latitude) || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(FeatureError::InvalidConfig("coordinates out of range".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.lag_count + NON_LAG_SLOTS
    }
}

/// Slot names in layout order.
pub fn feature_names(lag_count: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=lag_count).map(|d| format!("lag_{d}_rel")).collect();
    names.push("imbalance_now".into());
    for f in ["month", "weekday", "hour", "minute"] {
        names.push(f.into());
    }
    for f in ["month", "weekday", "hour", "minute"] {
        names.push(format!("{f}_sin"));
        names.push(format!("{f}_cos"));
    }
    names.push("holiday".into());
    names.push("solar_elevation".into());
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// `I(t)`, the value relative targets are measured against.
    pub reference_value: f64,
    pub origin: DateTime<Utc>,
}

/// `(sin(2 pi v / p), cos(2 pi v / p))`.
pub fn encode_cyclic(value: f64, period: f64) -> Result<(f64, f64), FeatureError> {
    if !(period > 0.0) {
        return Err(FeatureError::NonPositivePeriod(period));
    }
    let angle = 2.0 * PI * value / period;
    Ok((angle.sin(), angle.cos()))
}

/// 1 when the local calendar date of `t` is a holiday.
pub fn holiday_flag(t: DateTime<Utc>, config: &FeatureConfig) -> u8 {
    config
        .holidays
        .contains(&t.with_timezone(&config.timezone).date_naive()) as u8
}

/// Appends the 14 calendar/solar slots for origin `t`.
fn push_temporal(t: DateTime<Utc>, config: &FeatureConfig, out: &mut Vec<f64>) {
    let local = t.with_timezone(&config.timezone);
    let raw = [
        (local.month() as f64, 12.0),
        (local.weekday().num_days_from_monday() as f64, 7.0),
        (local.hour() as f64, 24.0),
        (local.minute() as f64, 60.0),
    ];
    out.extend(raw.iter().map(|r| r.0));
    for (v, p) in raw {
        let (s, c) = encode_cyclic(v, p).expect("constant periods are positive");
        out.push(s);
        out.push(c);
    }
    out.push(holiday_flag(t, config) as f64);
    out.push(solar_elevation(t, config.latitude, config.longitude));
}

/// Fills `out` for series index `i`, assuming the lag window is complete.
fn write_vector(series: &ImbalanceSeries, i: usize, config: &FeatureConfig, out: &mut Vec<f64>) {
    out.clear();
    let now = series.get(i).unwrap();
    for d in 1..=config.lag_count {
        out.push(series.get(i - d).unwrap() - now);
    }
    out.push(now);
    push_temporal(series.timestamp_at(i), config, out);
}

pub fn build_feature_vector(
    series: &ImbalanceSeries,
    t: DateTime<Utc>,
    config: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let i = series
        .index_of(t)
        .filter(|&i| i >= config.lag_count)
        .ok_or(FeatureError::OutOfSeriesRange(t))?;
    let offsets: Vec<usize> = (0..=config.lag_count)
        .filter(|&d| series.get(i - d).is_none())
        .collect();
    if !offsets.is_empty() {
        return Err(FeatureError::MissingLagData { origin: t, offsets });
    }
    let mut values = Vec::with_capacity(config.feature_dim());
    write_vector(series, i, config, &mut values);
    Ok(FeatureVector {
        values,
        reference_value: series.get(i).unwrap(),
        origin: t,
    })
}

/// Feature rows for every origin whose lag window is complete; shared by
/// all horizons so calendar and solar features are computed once.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    n_features: usize,
    indices: Vec<usize>,
    rows: Vec<f64>,
}

impl FeatureTable {
    pub fn build(series: &ImbalanceSeries, config: &FeatureConfig) -> Self {
        let n_features = config.feature_dim();
        let mut indices = Vec::new();
        let mut rows = Vec::new();
        let mut buf = Vec::with_capacity(n_features);
        // Length of the present run ending at the current index.
        let mut run = 0usize;
        for i in 0..series.len() {
            run = if series.get(i).is_some() { run + 1 } else { 0 };
            if run > config.lag_count {
                write_vector(series, i, config, &mut buf);
                indices.push(i);
                rows.extend_from_slice(&buf);
            }
        }
        Self {
            n_features,
            indices,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Series indices of the tabulated origins, ascending.
    pub fn origin_indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.n_features..(k + 1) * self.n_features]
    }

    /// Row for series index `i`, if that origin is tabulated.
    pub fn row_for_index(&self, i: usize) -> Option<&[f64]> {
        self.indices.binary_search(&i).ok().map(|k| self.row(k))
    }
}

/// Training rows for one horizon.
#[derive(Debug, Clone)]
pub struct TrainingMatrix {
    pub horizon: usize,
    pub area: String,
    pub origins: Vec<DateTime<Utc>>,
    pub reference_values: Vec<f64>,
    /// Features and relative targets `I(t + h) - I(t)`.
    pub data: Dataset<f64>,
}

impl TrainingMatrix {
    pub fn from_table(
        table: &FeatureTable,
        series: &ImbalanceSeries,
        horizon: usize,
        config: &FeatureConfig,
    ) -> Result<Self, FeatureError> {
        if horizon == 0 || horizon > config.horizons {
            return Err(FeatureError::InvalidHorizon {
                horizon,
                max: config.horizons,
            });
        }
        let keep: Vec<usize> = (0..table.len())
            .filter(|&k| series.get(table.indices[k] + horizon).is_some())
            .collect();
        if keep.is_empty() {
            return Err(FeatureError::EmptyMatrix(horizon));
        }
        let n = keep.len();
        let mut columns = vec![0.0; n * table.n_features];
        let mut targets = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut reference_values = Vec::with_capacity(n);
        for (row, &k) in keep.iter().enumerate() {
            let i = table.indices[k];
            let features = table.row(k);
            for (f, &v) in features.iter().enumerate() {
                columns[f * n + row] = v;
            }
            let now = series.get(i).unwrap();
            targets.push(series.get(i + horizon).unwrap() - now);
            origins.push(series.timestamp_at(i));
            reference_values.push(now);
        }
        let data = Dataset::from_columns(table.n_features, columns, targets)
            .expect("column buffer sized from the table");
        Ok(Self {
            horizon,
            area: series.area().to_string(),
            origins,
            reference_values,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn relative_targets(&self) -> &[f64] {
        self.data.targets()
    }

    /// Timestamp of the latest target used by any row.
    pub fn max_target_time(&self) -> Option<DateTime<Utc>> {
        self.origins
            .last()
            .map(|&t| t + chrono::Duration::seconds(self.horizon as i64 * STEP_SECONDS))
    }
}

pub fn build_training_matrix(
    series: &ImbalanceSeries,
    horizon: usize,
    config: &FeatureConfig,
) -> Result<TrainingMatrix, FeatureError> {
    if horizon == 0 || horizon > config.horizons {
        return Err(FeatureError::InvalidHorizon {
            horizon,
            max: config.horizons,
        });
    }
    let table = FeatureTable::build(series, config);
    TrainingMatrix::from_table(&table, series, horizon, config)
}
