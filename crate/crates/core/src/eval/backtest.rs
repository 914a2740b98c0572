use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::benchmark::{ExternalBenchmark, WEEK_STEPS};
use super::metrics::{coverage_probability, mae, mse};
use super::EvalError;
use crate::features::FeatureTable;
use crate::forecast::{train_bank, AreaInput, ForecastError};
use crate::qrf::HyperParams;
use crate::timeseries::{ImbalanceSeries, STEP_SECONDS};
use crate::YearMonth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestProtocol {
    pub train_months: u32,
    pub retrain_every_months: u32,
    /// Inclusive range of evaluation months; `None` evaluates every month
    /// that has `train_months` full months of history before it.
    pub eval_range: Option<(YearMonth, YearMonth)>,
    /// Truncates each fold's evaluation window to this many days.
    pub eval_days: Option<u32>,
    pub coverage_level: f64,
    pub params: HyperParams,
}

impl Default for BacktestProtocol {
    fn default() -> Self {
        Self {
            train_months: 12,
            retrain_every_months: 1,
            eval_range: None,
            eval_days: None,
            coverage_level: 0.95,
            params: HyperParams::default(),
        }
    }
}

impl BacktestProtocol {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidProtocol(m));
        if self.train_months == 0 || self.retrain_every_months == 0 {
            return bad("train_months and retrain_every_months must be at least 1".into());
        }
        if let Some((a, b)) = self.eval_range {
            if a > b {
                return bad(format!("evaluation range {a}..{b} is reversed"));
            }
        }
        if self.eval_days == Some(0) {
            return bad("eval_days must be at least 1".into());
        }
        if !(self.coverage_level > 0.0 && self.coverage_level < 1.0) {
            return bad(format!("coverage level {} outside (0, 1)", self.coverage_level));
        }
        self.params
            .validate()
            .map_err(|e| EvalError::InvalidProtocol(e.to_string()))
    }

    /// Evaluation months for one series in its area's zone.
    pub fn eval_months(&self, series: &ImbalanceSeries, tz: chrono_tz::Tz) -> Vec<YearMonth> {
        let (first, last) = match self.eval_range {
            Some(r) => r,
            None => {
                if series.is_empty() {
                    return Vec::new();
                }
                let mut first_full = YearMonth::containing(series.start(), tz);
                if first_full.start_in(tz) < series.start() {
                    first_full = first_full.add_months(1);
                }
                let last_slot = series.end() - Duration::seconds(STEP_SECONDS);
                (
                    first_full.add_months(self.train_months as i32),
                    YearMonth::containing(last_slot, tz),
                )
            }
        };
        let count = first.months_until(last) + 1;
        (0..count.max(0)).map(|k| first.add_months(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FoldOutcome {
    Completed {
        latest_training_target: DateTime<Utc>,
        /// Records scored in this fold.
        scored: usize,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub area: String,
    pub months: Vec<YearMonth>,
    pub train_window: (DateTime<Utc>, DateTime<Utc>),
    pub eval_window: (DateTime<Utc>, DateTime<Utc>),
    pub outcome: FoldOutcome,
}

impl FoldRecord {
    pub fn is_completed(&self) -> bool {
        matches!(self.outcome, FoldOutcome::Completed { .. })
    }
}

/// One scored `(origin, horizon)` pair with every forecaster's output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastRecord {
    /// Index into [`EvalGrid::areas`].
    pub area: usize,
    pub horizon: usize,
    pub origin: DateTime<Utc>,
    pub month: YearMonth,
    pub observed: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub naive: f64,
    /// Present exactly when the external feed covers this record's cell.
    pub external: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub area: String,
    pub horizon: usize,
    pub month: YearMonth,
    pub n: usize,
    pub qrf: Option<Metrics>,
    pub cp: Option<f64>,
    pub naive: Option<Metrics>,
    pub external: Option<Metrics>,
}

/// Pooled over every month of one `(area, horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSummary {
    pub area: String,
    pub horizon: usize,
    pub n: usize,
    pub qrf: Option<Metrics>,
    pub cp: Option<f64>,
    pub naive: Option<Metrics>,
    /// Over the records the external feed covers.
    pub external: Option<(Metrics, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub origin: DateTime<Utc>,
    pub qrf: f64,
    pub naive: f64,
    pub external: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub coverage_level: f64,
    pub areas: Vec<String>,
    pub folds: Vec<FoldRecord>,
    /// Sorted by area, horizon, month.
    pub cells: Vec<CellSummary>,
    /// Sorted by area, horizon, origin.
    pub records: Vec<ForecastRecord>,
}

fn metrics_of(pred: &[f64], obs: &[Option<f64>]) -> Option<Metrics> {
    Some(Metrics {
        mse: mse(pred, obs).ok()?,
        mae: mae(pred, obs).ok()?,
    })
}

/// QRF, naive and (if present on every record) external metrics.
fn summarize(records: &[ForecastRecord]) -> (Option<Metrics>, Option<f64>, Option<Metrics>, Option<(Metrics, usize)>) {
    let obs: Vec<Option<f64>> = records.iter().map(|r| Some(r.observed)).collect();
    let point: Vec<f64> = records.iter().map(|r| r.point).collect();
    let naive: Vec<f64> = records.iter().map(|r| r.naive).collect();
    let iv: Vec<(f64, f64)> = records.iter().map(|r| (r.lower, r.upper)).collect();
    let ext: Vec<(f64, Option<f64>)> = records
        .iter()
        .filter_map(|r| r.external.map(|e| (e, Some(r.observed))))
        .collect();
    let (ext_pred, ext_obs): (Vec<f64>, Vec<Option<f64>>) = ext.into_iter().unzip();
    (
        metrics_of(&point, &obs),
        coverage_probability(&iv, &obs).ok(),
        metrics_of(&naive, &obs),
        metrics_of(&ext_pred, &ext_obs).map(|m| (m, ext_obs.len())),
    )
}

impl EvalGrid {
    pub fn area_index(&self, area: &str) -> Option<usize> {
        self.areas.iter().position(|a| a == area)
    }

    pub fn cell(&self, area: &str, horizon: usize, month: YearMonth) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.area == area && c.horizon == horizon && c.month == month)
    }

    /// Records of one `(area, horizon)`, ordered by origin.
    pub fn records_for(&self, area: usize, horizon: usize) -> &[ForecastRecord] {
        let lo = self.records.partition_point(|r| (r.area, r.horizon) < (area, horizon));
        let hi = self.records.partition_point(|r| (r.area, r.horizon) <= (area, horizon));
        &self.records[lo..hi]
    }

    /// `(area index, horizon)` pairs that have at least one cell.
    pub fn series_keys(&self) -> Vec<(usize, usize)> {
        let keys: BTreeSet<(usize, usize)> = self
            .cells
            .iter()
            .map(|c| (self.area_index(&c.area).unwrap(), c.horizon))
            .collect();
        keys.into_iter().collect()
    }

    pub fn aggregates(&self) -> Vec<AggregateSummary> {
        self.series_keys()
            .into_iter()
            .map(|(a, h)| {
                let recs = self.records_for(a, h);
                let (qrf, cp, naive, external) = summarize(recs);
                AggregateSummary {
                    area: self.areas[a].clone(),
                    horizon: h,
                    n: recs.len(),
                    qrf,
                    cp,
                    naive,
                    external,
                }
            })
            .collect()
    }

    /// Cumulative absolute error per forecaster, one point per origin.
    pub fn curve(&self, area: usize, horizon: usize) -> Vec<CurvePoint> {
        let recs = self.records_for(area, horizon);
        let has_external = recs.iter().any(|r| r.external.is_some());
        let (mut q, mut n, mut e) = (0.0, 0.0, 0.0);
        recs.iter()
            .map(|r| {
                q += (r.point - r.observed).abs();
                n += (r.naive - r.observed).abs();
                if let Some(x) = r.external {
                    e += (x - r.observed).abs();
                }
                CurvePoint {
                    origin: r.origin,
                    qrf: q,
                    naive: n,
                    external: has_external.then_some(e),
                }
            })
            .collect()
    }

    pub fn completed_folds(&self) -> usize {
        self.folds.iter().filter(|f| f.is_completed()).count()
    }
}

struct FoldResult {
    fold: FoldRecord,
    records: Vec<ForecastRecord>,
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    area_idx: usize,
    input: &AreaInput<'_>,
    table: &FeatureTable,
    months: &[YearMonth],
    protocol: &BacktestProtocol,
    external: Option<&ExternalBenchmark>,
) -> Result<FoldResult, EvalError> {
    let series = input.series;
    let config = input.config;
    let tz = config.timezone;
    let area = series.area();
    let first = months[0];
    let last = *months.last().unwrap();
    let train_window = (
        first.add_months(-(protocol.train_months as i32)).start_in(tz),
        first.start_in(tz),
    );
    let mut eval_end = last.add_months(1).start_in(tz);
    if let Some(days) = protocol.eval_days {
        eval_end = eval_end.min(train_window.1 + Duration::days(days as i64));
    }
    let eval_window = (train_window.1, eval_end);
    let mut fold = FoldRecord {
        area: area.to_string(),
        months: months.to_vec(),
        train_window,
        eval_window,
        outcome: FoldOutcome::Skipped { reason: String::new() },
    };

    let bank = match train_bank(&[*input], train_window, &protocol.params) {
        Ok(b) => b,
        Err(e @ ForecastError::InsufficientData { .. }) => {
            log::warn!("{area} fold {first}: skipped ({e})");
            fold.outcome = FoldOutcome::Skipped { reason: e.to_string() };
            return Ok(FoldResult { fold, records: Vec::new() });
        }
        Err(e) => return Err(e.into()),
    };
    if bank.latest_target() >= eval_window.0 {
        return Err(EvalError::Leakage {
            area: area.to_string(),
            latest_target: bank.latest_target(),
            first_origin: eval_window.0,
        });
    }
    let forests = &bank.area(area).expect("bank holds the trained area").forests;

    let index_at = |t: DateTime<Utc>| ((t - series.start()).num_seconds().max(0) + STEP_SECONDS - 1) / STEP_SECONDS;
    let (lo, hi) = (index_at(eval_window.0) as usize, index_at(eval_window.1) as usize);
    let indices = table.origin_indices();
    let ks = indices.partition_point(|&i| i < lo)..indices.partition_point(|&i| i < hi);

    let month_of = |t: DateTime<Utc>| YearMonth::containing(t, tz);
    // Cells where the external feed has at least one entry.
    let mut covered: BTreeSet<(usize, YearMonth)> = BTreeSet::new();
    if let Some(ext) = external {
        for i in lo..hi.min(series.len()) {
            let t = series.timestamp_at(i);
            for h in 1..=forests.len() {
                if ext.get(area, t, h).is_some() {
                    covered.insert((h, month_of(t)));
                }
            }
        }
    }

    let per_origin: Vec<Vec<ForecastRecord>> = ks
        .into_par_iter()
        .map(|k| {
            let i = indices[k];
            let t = series.timestamp_at(i);
            let month = month_of(t);
            let x = table.row(k);
            let now = series.get(i).expect("tabulated origins are present");
            let mut out = Vec::new();
            for (hi, forest) in forests.iter().enumerate() {
                let h = hi + 1;
                let Some(observed) = series.get(i + h) else { continue };
                let Some(naive) = (i + h)
                    .checked_sub(WEEK_STEPS as usize)
                    .and_then(|j| series.get(j))
                else {
                    continue;
                };
                let ext = if covered.contains(&(h, month)) {
                    match external.and_then(|e| e.get(area, t, h)) {
                        Some(f) => Some(f.point),
                        None => continue,
                    }
                } else {
                    None
                };
                let p = forest.predict(x, protocol.coverage_level)?;
                out.push(ForecastRecord {
                    area: area_idx,
                    horizon: h,
                    origin: t,
                    month,
                    observed,
                    point: now + p.mean,
                    lower: now + p.lower,
                    upper: now + p.upper,
                    naive,
                    external: ext,
                });
            }
            Ok(out)
        })
        .collect::<Result<_, crate::qrf::QrfError>>()
        .map_err(ForecastError::from)?;
    let records: Vec<ForecastRecord> = per_origin.into_iter().flatten().collect();
    log::info!("{area} fold {first}: {} records scored", records.len());
    fold.outcome = FoldOutcome::Completed {
        latest_training_target: bank.latest_target(),
        scored: records.len(),
    };
    Ok(FoldResult { fold, records })
}

/// Rolling-origin evaluation: one bank per fold, trained on the
/// `train_months` calendar months before it.
pub fn run_backtest(
    inputs: &[AreaInput<'_>],
    protocol: &BacktestProtocol,
    external: Option<&ExternalBenchmark>,
) -> Result<EvalGrid, EvalError> {
    protocol.validate()?;
    let areas: Vec<String> = inputs.iter().map(|i| i.series.area().to_string()).collect();
    if areas.iter().collect::<BTreeSet<_>>().len() != areas.len() {
        return Err(EvalError::InvalidProtocol("an area is listed twice".into()));
    }
    let mut folds = Vec::new();
    let mut records = Vec::new();
    let mut horizons = Vec::new();
    for (a, input) in inputs.iter().enumerate() {
        horizons.push(input.config.horizons);
        let months = protocol.eval_months(input.series, input.config.timezone);
        if months.is_empty() {
            log::warn!("{}: no evaluation month has enough history", areas[a]);
            continue;
        }
        let table = FeatureTable::build(input.series, input.config);
        let groups: Vec<&[YearMonth]> = months.chunks(protocol.retrain_every_months as usize).collect();
        let results = groups
            .par_iter()
            .map(|months| run_fold(a, input, &table, months, protocol, external))
            .collect::<Result<Vec<_>, _>>()?;
        for r in results {
            folds.push(r.fold);
            records.extend(r.records);
        }
    }
    records.sort_by(|x, y| (x.area, x.horizon, x.origin).cmp(&(y.area, y.horizon, y.origin)));

    // Every month of every completed fold gets a cell per horizon, even
    // when nothing in it could be scored.
    let mut cell_keys: BTreeMap<(usize, usize, YearMonth), ()> = BTreeMap::new();
    for f in folds.iter().filter(|f| f.is_completed()) {
        let a = areas.iter().position(|x| *x == f.area).unwrap();
        for &m in &f.months {
            for h in 1..=horizons[a] {
                cell_keys.insert((a, h, m), ());
            }
        }
    }
    let mut cells = Vec::with_capacity(cell_keys.len());
    let mut cursor = 0;
    for &(a, h, m) in cell_keys.keys() {
        let start = cursor + records[cursor..].partition_point(|r| (r.area, r.horizon, r.month) < (a, h, m));
        let end = start + records[start..].partition_point(|r| (r.area, r.horizon, r.month) == (a, h, m));
        cursor = end;
        let (qrf, cp, naive, external) = summarize(&records[start..end]);
        cells.push(CellSummary {
            area: areas[a].clone(),
            horizon: h,
            month: m,
            n: end - start,
            qrf,
            cp,
            naive,
            external: external.map(|(m, _)| m),
        });
    }
    Ok(EvalGrid {
        coverage_level: protocol.coverage_level,
        areas,
        folds,
        cells,
        records,
    })
}
