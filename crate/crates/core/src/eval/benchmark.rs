use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};

use super::EvalError;
use crate::timeseries::{is_aligned, parse_timestamp, ImbalanceSeries, STEP_SECONDS};

/// Steps in one week of 5-minute slots.
pub const WEEK_STEPS: i64 = 7 * 288;

/// Value one week before the target slot `t + horizon`.
pub fn naive_forecast(series: &ImbalanceSeries, t: DateTime<Utc>, horizon: usize) -> Result<f64, EvalError> {
    let source = t + Duration::seconds((horizon as i64 - WEEK_STEPS) * STEP_SECONDS);
    series
        .value_at(source)
        .ok_or(EvalError::MissingHistory { origin: t, horizon })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalForecast {
    pub point: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Third-party forecasts keyed by `(area, origin, horizon)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalBenchmark {
    by_area: BTreeMap<String, HashMap<(i64, usize), ExternalForecast>>,
}

impl ExternalBenchmark {
    pub fn len(&self) -> usize {
        self.by_area.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn areas(&self) -> impl Iterator<Item = &str> {
        self.by_area.keys().map(String::as_str)
    }

    pub fn get(&self, area: &str, origin: DateTime<Utc>, horizon: usize) -> Option<&ExternalForecast> {
        self.by_area.get(area)?.get(&(origin.timestamp(), horizon))
    }

    /// Adds an entry; identical repeats are accepted, conflicting ones rejected.
    pub fn insert(
        &mut self,
        area: &str,
        origin: DateTime<Utc>,
        horizon: usize,
        forecast: ExternalForecast,
    ) -> Result<(), EvalError> {
        let slot = self.by_area.entry(area.to_string()).or_default();
        match slot.get(&(origin.timestamp(), horizon)) {
            Some(existing) if *existing != forecast => Err(EvalError::DuplicateKey {
                area: area.to_string(),
                origin,
                horizon,
            }),
            Some(_) => Ok(()),
            None => {
                slot.insert((origin.timestamp(), horizon), forecast);
                Ok(())
            }
        }
    }
}

pub fn ingest_external_benchmark(path: impl AsRef<Path>) -> Result<ExternalBenchmark, EvalError> {
    let file = std::fs::File::open(path.as_ref())?;
    read_external_benchmark(file)
}

/// Parses the forecast CSV schema; the interval and coverage columns are optional.
pub fn read_external_benchmark<R: Read>(reader: R) -> Result<ExternalBenchmark, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut table = ExternalBenchmark::default();
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(EvalError::MalformedRow { line: 1, reason: e.to_string() }),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        log::warn!("external benchmark file is empty; comparisons skipped");
        return Ok(table);
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        col(name).ok_or_else(|| EvalError::MalformedRow {
            line: 1,
            reason: format!("missing column `{name}`"),
        })
    };
    let (c_area, c_origin, c_h, c_point) = (
        required("area")?,
        required("origin_utc")?,
        required("horizon_steps")?,
        required("point_mw")?,
    );
    let (c_lo, c_hi) = (col("pi_lower_mw"), col("pi_upper_mw"));

    for (k, record) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let malformed = |reason: String| EvalError::MalformedRow { line, reason };
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let area = field(c_area);
        if area.is_empty() {
            return Err(malformed("empty area".into()));
        }
        let origin = parse_timestamp(field(c_origin))
            .ok_or_else(|| malformed(format!("bad timestamp `{}`", field(c_origin))))?;
        if !is_aligned(origin) {
            return Err(malformed(format!("origin {origin} is off the 5-minute grid")));
        }
        let horizon: usize = field(c_h)
            .parse()
            .ok()
            .filter(|&h| h >= 1)
            .ok_or_else(|| malformed(format!("bad horizon `{}`", field(c_h))))?;
        let number = |c: usize| -> Result<f64, EvalError> {
            field(c)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(format!("bad number `{}`", field(c))))
        };
        let optional = |c: Option<usize>| -> Result<Option<f64>, EvalError> {
            match c {
                Some(c) if !field(c).is_empty() => number(c).map(Some),
                _ => Ok(None),
            }
        };
        let forecast = ExternalForecast {
            point: number(c_point)?,
            lower: optional(c_lo)?,
            upper: optional(c_hi)?,
        };
        if let (Some(lo), Some(hi)) = (forecast.lower, forecast.upper) {
            if lo > hi {
                return Err(malformed(format!("interval ({lo}, {hi}) is reversed")));
            }
        }
        table.insert(area, origin, horizon, forecast)?;
    }
    if table.is_empty() {
        log::warn!("external benchmark file has no rows; comparisons skipped");
    }
    Ok(table)
}
