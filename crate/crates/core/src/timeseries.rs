//! Market areas and grid-aligned 5-minute imbalance series.
//!
//! A value at index `i` is the average imbalance (MW) over the five minutes
//! ending at `start + i * 300 s`. Timestamps are UTC throughout; local time
//! only appears in feature engineering.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Grid step of every series, in seconds.
pub const STEP_SECONDS: i64 = 300;

/// Grid steps per day.
pub const STEPS_PER_DAY: i64 = 86_400 / STEP_SECONDS;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("timestamp {0} is not on the 5-minute grid")]
    MisalignedTimestamp(DateTime<Utc>),
    #[error("conflicting values for {timestamp}: {first} vs {second}")]
    ConflictingDuplicate {
        timestamp: DateTime<Utc>,
        first: f64,
        second: f64,
    },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("range [{from}, {to}) is outside the series span [{start}, {end})")]
    OutOfRange {
        from: DateTime<Utc>,
        to: DateTime<Utc>,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },
    #[error("invalid market area: {0}")]
    InvalidArea(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A price/market area with the coordinates and civil calendar used for
/// its temporal features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketArea {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub timezone_id: String,
    /// Either `builtin:no` or a path to a holiday calendar file.
    pub holiday_calendar_id: String,
}

impl MarketArea {
    pub fn validate(&self) -> Result<(), SeriesError> {
        if self.id.trim().is_empty() {
            return Err(SeriesError::InvalidArea("empty id".into()));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(SeriesError::InvalidArea(format!(
                "{}: latitude {} outside [-90, 90]",
                self.id, self.latitude
            )));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(SeriesError::InvalidArea(format!(
                "{}: longitude {} outside [-180, 180]",
                self.id, self.longitude
            )));
        }
        if self.timezone_id.parse::<chrono_tz::Tz>().is_err() {
            return Err(SeriesError::InvalidArea(format!(
                "{}: unknown timezone {}",
                self.id, self.timezone_id
            )));
        }
        Ok(())
    }

    /// The five Norwegian areas with approximate load-centre coordinates.
    pub fn norwegian_defaults() -> Vec<MarketArea> {
        [
            ("NO1", 59.91, 10.75),
            ("NO2", 58.15, 8.00),
            ("NO3", 63.43, 10.39),
            ("NO4", 69.65, 18.96),
            ("NO5", 60.39, 5.32),
        ]
        .into_iter()
        .map(|(id, latitude, longitude)| MarketArea {
            id: id.to_string(),
            latitude,
            longitude,
            timezone_id: "Europe/Oslo".to_string(),
            holiday_calendar_id: crate::features::BUILTIN_NORWEGIAN_CALENDAR.to_string(),
        })
        .collect()
    }
}

#[derive(Debug, Deserialize)]
struct AreaFile {
    area: Vec<MarketArea>,
}

/// Parses an area configuration in TOML:
///
/// ```toml
/// [[area]]
/// id = "NO1"
/// latitude = 59.91
/// longitude = 10.75
/// timezone_id = "Europe/Oslo"
/// holiday_calendar_id = "builtin:no"
/// ```
pub fn parse_area_config(text: &str) -> Result<Vec<MarketArea>, SeriesError> {
    let file: AreaFile =
        toml::from_str(text).map_err(|e| SeriesError::InvalidArea(e.to_string()))?;
    let mut seen = HashSet::new();
    for area in &file.area {
        area.validate()?;
        if !seen.insert(area.id.clone()) {
            return Err(SeriesError::InvalidArea(format!("duplicate id {}", area.id)));
        }
    }
    Ok(file.area)
}

pub fn load_area_config(path: impl AsRef<Path>) -> Result<Vec<MarketArea>, SeriesError> {
    let text = std::fs::read_to_string(path)?;
    parse_area_config(&text)
}

/// Immutable, grid-aligned imbalance series for one area.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceSeries {
    area: String,
    start: DateTime<Utc>,
    values: Vec<Option<f64>>,
}

impl ImbalanceSeries {
    pub fn new(
        area: impl Into<String>,
        start: DateTime<Utc>,
        values: Vec<Option<f64>>,
    ) -> Result<Self, SeriesError> {
        if !is_aligned(start) {
            return Err(SeriesError::MisalignedTimestamp(start));
        }
        if let Some(i) = values.iter().position(|v| matches!(v, Some(x) if !x.is_finite())) {
            return Err(SeriesError::NonFinite(i));
        }
        Ok(Self {
            area: area.into(),
            start,
            values,
        })
    }

    /// Convenience constructor for fully present data.
    pub fn from_values(
        area: impl Into<String>,
        start: DateTime<Utc>,
        values: &[f64],
    ) -> Result<Self, SeriesError> {
        Self::new(area, start, values.iter().copied().map(Some).collect())
    }

    pub fn area(&self) -> &str {
        &self.area
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    /// Exclusive end of the span: the timestamp one step after the last slot.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp_at(self.values.len())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.values.get(index).copied().flatten()
    }

    pub fn timestamp_at(&self, index: usize) -> DateTime<Utc> {
        self.start + chrono::Duration::seconds(index as i64 * STEP_SECONDS)
    }

    /// Index of an aligned timestamp inside the span.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let offset = (ts - self.start).num_seconds();
        if offset < 0 || offset % STEP_SECONDS != 0 {
            return None;
        }
        let idx = (offset / STEP_SECONDS) as usize;
        (idx < self.values.len()).then_some(idx)
    }

    pub fn value_at(&self, ts: DateTime<Utc>) -> Option<f64> {
        self.index_of(ts).and_then(|i| self.values[i])
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Half-open window `[from, to)`.
    pub fn slice(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Result<Self, SeriesError> {
        if !is_aligned(from) {
            return Err(SeriesError::MisalignedTimestamp(from));
        }
        if !is_aligned(to) {
            return Err(SeriesError::MisalignedTimestamp(to));
        }
        if from > to || from < self.start || to > self.end() {
            return Err(SeriesError::OutOfRange {
                from,
                to,
                start: self.start,
                end: self.end(),
            });
        }
        let a = ((from - self.start).num_seconds() / STEP_SECONDS) as usize;
        let b = ((to - self.start).num_seconds() / STEP_SECONDS) as usize;
        Ok(Self {
            area: self.area.clone(),
            start: from,
            values: self.values[a..b].to_vec(),
        })
    }

    /// Like [`slice`](Self::slice) but intersects the window with the span
    /// instead of failing. Returns `None` when they do not overlap.
    pub fn clip(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Option<Self> {
        let from = from.max(self.start);
        let to = to.min(self.end());
        if from >= to {
            return None;
        }
        self.slice(align_up(from), align_up(to).min(self.end())).ok()
    }

    /// Returns a copy with `offset` added to every present value.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            area: self.area.clone(),
            start: self.start,
            values: self.values.iter().map(|v| v.map(|x| x + offset)).collect(),
        }
    }

    /// Writes the series in ingest format, one row per grid slot.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SeriesError> {
        writeln!(out, "timestamp_utc,value_mw")?;
        for (i, v) in self.values.iter().enumerate() {
            let ts = format_timestamp(self.timestamp_at(i));
            match v {
                Some(x) => writeln!(out, "{ts},{x}")?,
                None => writeln!(out, "{ts},")?,
            }
        }
        Ok(())
    }
}

/// Maximal runs of missing values plus the present fraction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    /// `(first_missing_index, run_length)`, sorted and disjoint.
    pub runs: Vec<(usize, usize)>,
    pub coverage_fraction: f64,
}

impl GapReport {
    pub fn missing_count(&self) -> usize {
        self.runs.iter().map(|r| r.1).sum()
    }
}

pub fn gap_report(series: &ImbalanceSeries) -> GapReport {
    let mut runs = Vec::new();
    let mut open: Option<usize> = None;
    for (i, v) in series.values().iter().enumerate() {
        match (v, open) {
            (None, None) => open = Some(i),
            (Some(_), Some(s)) => {
                runs.push((s, i - s));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((s, series.len() - s));
    }
    let coverage_fraction = if series.is_empty() {
        1.0
    } else {
        series.present_count() as f64 / series.len() as f64
    };
    GapReport {
        runs,
        coverage_fraction,
    }
}

pub fn is_aligned(ts: DateTime<Utc>) -> bool {
    ts.timestamp().rem_euclid(STEP_SECONDS) == 0 && ts.timestamp_subsec_nanos() == 0
}

/// Rounds up to the next grid point (identity on aligned timestamps).
pub fn align_up(ts: DateTime<Utc>) -> DateTime<Utc> {
    let secs = ts.timestamp();
    let rem = secs.rem_euclid(STEP_SECONDS);
    let secs = if rem == 0 && ts.timestamp_subsec_nanos() == 0 {
        secs
    } else {
        secs - rem + STEP_SECONDS
    };
    Utc.timestamp_opt(secs, 0).unwrap()
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Accepts RFC 3339 (any offset, converted to UTC) or a naive
/// `YYYY-MM-DD[T ]HH:MM[:SS]` taken as UTC.
pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    let text = text.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(text) {
        return Some(ts.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(naive.and_utc());
        }
    }
    None
}

pub fn ingest_csv(path: impl AsRef<Path>, area: &str) -> Result<ImbalanceSeries, SeriesError> {
    let file = File::open(path)?;
    ingest_reader(file, area)
}

/// Reads `timestamp_utc,value_mw` rows (any order) into a grid-aligned series.
pub fn ingest_reader<R: Read>(reader: R, area: &str) -> Result<ImbalanceSeries, SeriesError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| SeriesError::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().collect();
    if names != ["timestamp_utc", "value_mw"] {
        return Err(SeriesError::MalformedRow {
            line: 1,
            reason: format!("expected header `timestamp_utc,value_mw`, got `{}`", names.join(",")),
        });
    }

    let mut rows: BTreeMap<i64, Option<f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| SeriesError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(SeriesError::MalformedRow {
                line,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let ts = parse_timestamp(&record[0]).ok_or_else(|| SeriesError::MalformedRow {
            line,
            reason: format!("unparsable timestamp `{}`", &record[0]),
        })?;
        if !is_aligned(ts) {
            return Err(SeriesError::MisalignedTimestamp(ts));
        }
        let value = if record[1].is_empty() {
            None
        } else {
            let v: f64 = record[1].parse().map_err(|_| SeriesError::MalformedRow {
                line,
                reason: format!("unparsable value `{}`", &record[1]),
            })?;
            if !v.is_finite() {
                return Err(SeriesError::MalformedRow {
                    line,
                    reason: "non-finite value".into(),
                });
            }
            Some(v)
        };

        let key = ts.timestamp();
        match (rows.get(&key).copied(), value) {
            (None, _) => {
                rows.insert(key, value);
            }
            (Some(None), Some(_)) => {
                rows.insert(key, value);
            }
            (Some(Some(a)), Some(b)) if a != b => {
                return Err(SeriesError::ConflictingDuplicate {
                    timestamp: ts,
                    first: a,
                    second: b,
                });
            }
            _ => log::debug!("line {line}: duplicate row for {} ignored", format_timestamp(ts)),
        }
    }

    let (&first, _) = rows.first_key_value().ok_or(SeriesError::EmptyInput)?;
    let (&last, _) = rows.last_key_value().unwrap();
    let len = ((last - first) / STEP_SECONDS + 1) as usize;
    let mut values = vec![None; len];
    for (key, v) in rows {
        values[((key - first) / STEP_SECONDS) as usize] = v;
    }
    ImbalanceSeries::new(area, Utc.timestamp_opt(first, 0).unwrap(), values)
}
