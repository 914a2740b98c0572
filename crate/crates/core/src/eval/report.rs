//! CSV report files for an [`EvalGrid`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::backtest::{EvalGrid, FoldOutcome, Metrics};
use super::EvalError;
use crate::timeseries::format_timestamp;
use crate::util::write_atomic;

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn metric_fields(m: Option<Metrics>) -> (String, String) {
    (opt(m.map(|m| m.mse)), opt(m.map(|m| m.mae)))
}

pub fn summary_csv(grid: &EvalGrid) -> String {
    let mut s = String::from("area,horizon,month,mse,mae,cp,n\n");
    for c in &grid.cells {
        let (mse, mae) = metric_fields(c.qrf);
        writeln!(s, "{},{},{},{mse},{mae},{},{}", c.area, c.horizon, c.month, opt(c.cp), c.n).unwrap();
    }
    s
}

/// Per-cell metrics of every forecaster on the shared record set.
pub fn benchmarks_csv(grid: &EvalGrid) -> String {
    let mut s = String::from("area,horizon,month,forecaster,mse,mae,n\n");
    for c in &grid.cells {
        for (name, m) in [("qrf", c.qrf), ("naive", c.naive), ("external", c.external)] {
            if name == "external" && m.is_none() {
                continue;
            }
            let (mse, mae) = metric_fields(m);
            writeln!(s, "{},{},{},{name},{mse},{mae},{}", c.area, c.horizon, c.month, c.n).unwrap();
        }
    }
    s
}

pub fn overall_csv(grid: &EvalGrid) -> String {
    let mut s = String::from("area,horizon,forecaster,mse,mae,cp,n\n");
    for a in grid.aggregates() {
        let (mse, mae) = metric_fields(a.qrf);
        writeln!(s, "{},{},qrf,{mse},{mae},{},{}", a.area, a.horizon, opt(a.cp), a.n).unwrap();
        let (mse, mae) = metric_fields(a.naive);
        writeln!(s, "{},{},naive,{mse},{mae},,{}", a.area, a.horizon, a.n).unwrap();
        if let Some((m, n)) = a.external {
            writeln!(s, "{},{},external,{},{},,{n}", a.area, a.horizon, m.mse, m.mae).unwrap();
        }
    }
    s
}

pub fn folds_csv(grid: &EvalGrid) -> String {
    let mut s = String::from(
        "area,first_month,last_month,train_start_utc,train_end_utc,eval_start_utc,eval_end_utc,status,scored,detail\n",
    );
    for f in &grid.folds {
        let (status, scored, detail) = match &f.outcome {
            FoldOutcome::Completed { scored, .. } => ("completed", scored.to_string(), String::new()),
            FoldOutcome::Skipped { reason } => ("skipped", String::new(), reason.replace(['"', ','], " ")),
        };
        writeln!(
            s,
            "{},{},{},{},{},{},{},{status},{scored},{detail}",
            f.area,
            f.months[0],
            f.months.last().unwrap(),
            format_timestamp(f.train_window.0),
            format_timestamp(f.train_window.1),
            format_timestamp(f.eval_window.0),
            format_timestamp(f.eval_window.1),
        )
        .unwrap();
    }
    s
}

/// Cumulative absolute-error curve of one `(area, horizon)`.
pub fn curve_csv(grid: &EvalGrid, area: usize, horizon: usize) -> String {
    let curve = grid.curve(area, horizon);
    let has_external = curve.first().is_some_and(|p| p.external.is_some());
    let mut s = String::from("origin_utc,qrf_cum_abs_error_mw,naive_cum_abs_error_mw");
    if has_external {
        s.push_str(",external_cum_abs_error_mw");
    }
    s.push('\n');
    for p in curve {
        write!(s, "{},{},{}", format_timestamp(p.origin), p.qrf, p.naive).unwrap();
        if let Some(e) = p.external {
            write!(s, ",{e}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Every scored record, for offline recomputation.
pub fn records_csv(grid: &EvalGrid) -> String {
    let mut s = String::from("area,horizon,origin_utc,month,observed_mw,point_mw,pi_lower_mw,pi_upper_mw,naive_mw,external_mw\n");
    for r in &grid.records {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            grid.areas[r.area],
            r.horizon,
            format_timestamp(r.origin),
            r.month,
            r.observed,
            r.point,
            r.lower,
            r.upper,
            r.naive,
            opt(r.external)
        )
        .unwrap();
    }
    s
}

/// Writes `summary.csv`, `benchmarks.csv`, `overall.csv`, `folds.csv` and
/// one `curve_<area>_<horizon>.csv` per `(area, horizon)`; with
/// `include_records`, also `records.csv`. Returns the written paths.
pub fn render_report(grid: &EvalGrid, out_dir: impl AsRef<Path>, include_records: bool) -> Result<Vec<PathBuf>, EvalError> {
    if grid.cells.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(String, String)> = vec![
        ("summary.csv".into(), summary_csv(grid)),
        ("benchmarks.csv".into(), benchmarks_csv(grid)),
        ("overall.csv".into(), overall_csv(grid)),
        ("folds.csv".into(), folds_csv(grid)),
    ];
    for (a, h) in grid.series_keys() {
        files.push((format!("curve_{}_{h}.csv", grid.areas[a]), curve_csv(grid, a, h)));
    }
    if include_records {
        files.push(("records.csv".into(), records_csv(grid)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
