use std::fmt::Display;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use imbalance_qrf::eval::{ingest_external_benchmark, render_report, run_backtest, BacktestProtocol, EvalError};
use imbalance_qrf::features::{build_feature_vector, FeatureConfig};
use imbalance_qrf::forecast::{load_bank, make_forecast, save_bank, train_bank, write_forecast_csv, AreaInput, ForecastError};
use imbalance_qrf::qrf::HyperParams;
use imbalance_qrf::synth::{generate, SynthConfig};
use imbalance_qrf::timeseries::{
    format_timestamp, gap_report, ingest_csv, load_area_config, parse_timestamp, ImbalanceSeries, MarketArea,
    STEP_SECONDS,
};
use imbalance_qrf::{write_atomic, YearMonth};

use crate::{BacktestArgs, DataArgs, ForecastArgs, ForestArgs, SynthArgs, TrainArgs};

#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Usage,
    Data,
    Internal,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Usage => 2,
            Kind::Data => 1,
            Kind::Internal => 70,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub stage: &'static str,
    pub message: String,
}

type Result<T> = std::result::Result<T, CliError>;

fn err(kind: Kind, stage: &'static str, e: impl Display) -> CliError {
    CliError {
        kind,
        stage,
        message: e.to_string(),
    }
}

fn usage(stage: &'static str) -> impl Fn(String) -> CliError {
    move |m| err(Kind::Usage, stage, m)
}

fn data_err<E: Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| err(Kind::Data, stage, e)
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(err(Kind::Usage, "arguments", format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(data_err("output"))?;
    }
    write_atomic(path, bytes).map_err(data_err("output"))
}

fn hyper_params(f: &ForestArgs) -> Result<HyperParams> {
    let p = HyperParams {
        n_trees: f.trees as usize,
        min_leaf: f.min_leaf as usize,
        feature_fraction: f.feature_fraction,
        seed: f.seed,
        bootstrap: true,
    };
    p.validate().map_err(|e| err(Kind::Usage, "arguments", e))?;
    Ok(p)
}

fn check_coverage(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(err(Kind::Usage, "arguments", format!("--coverage {c} must lie strictly between 0 and 1")));
    }
    Ok(())
}

struct AreaData {
    series: ImbalanceSeries,
    config: FeatureConfig,
}

fn area_configs(args: &DataArgs) -> Result<Vec<(MarketArea, FeatureConfig)>> {
    let (areas, base) = match &args.areas {
        Some(path) => {
            require_exists(path, "area config")?;
            (load_area_config(path).map_err(data_err("area config"))?, path.parent().map(Path::to_path_buf))
        }
        None => (MarketArea::norwegian_defaults(), None),
    };
    areas
        .into_iter()
        .map(|a| {
            let cfg = FeatureConfig::for_area(&a, base.as_deref()).map_err(data_err("area config"))?;
            Ok((a, cfg))
        })
        .collect()
}

fn load_data(args: &DataArgs) -> Result<Vec<AreaData>> {
    require_exists(&args.data, "data path")?;
    let configs = area_configs(args)?;
    let mut out = Vec::new();
    if args.data.is_dir() {
        for (area, config) in configs {
            let path = args.data.join(format!("{}.csv", area.id));
            if path.is_file() {
                let series = ingest_csv(&path, &area.id).map_err(|e| err(Kind::Data, "ingest", format!("{}: {e}", path.display())))?;
                out.push(AreaData { series, config });
            }
        }
        if out.is_empty() {
            return Err(err(
                Kind::Data,
                "ingest",
                format!("no <area>.csv file for any configured area in {}", args.data.display()),
            ));
        }
    } else {
        let id = match &args.area {
            Some(id) => id.clone(),
            None => args
                .data
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        let (area, config) = configs
            .into_iter()
            .find(|(a, _)| a.id == id)
            .ok_or_else(|| err(Kind::Data, "ingest", format!("area `{id}` is not configured (use --area or --areas)")))?;
        let series = ingest_csv(&args.data, &area.id).map_err(|e| err(Kind::Data, "ingest", format!("{}: {e}", args.data.display())))?;
        out.push(AreaData { series, config });
    }
    for d in &out {
        log::info!(
            "{}: {} steps from {} ({} present)",
            d.series.area(),
            d.series.len(),
            format_timestamp(d.series.start()),
            d.series.present_count()
        );
    }
    Ok(out)
}

fn inputs(data: &[AreaData]) -> Vec<AreaInput<'_>> {
    data.iter()
        .map(|d| AreaInput {
            series: &d.series,
            config: &d.config,
        })
        .collect()
}

fn forecast_error(stage: &'static str) -> impl Fn(ForecastError) -> CliError {
    move |e| match e {
        ForecastError::InvalidInput(_) => err(Kind::Usage, stage, e),
        _ => err(Kind::Data, stage, e),
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let tz = chrono_tz::Europe::Oslo;
    let start = a.start.start_in(tz);
    let n_steps = match a.steps {
        Some(n) => n,
        None => ((a.start.add_months(a.months as i32).start_in(tz) - start).num_seconds() / STEP_SECONDS) as usize,
    };
    std::fs::create_dir_all(&a.out).map_err(data_err("output"))?;
    for (k, area) in a.areas.iter().enumerate() {
        let config = SynthConfig {
            area: area.clone(),
            seed: a.seed.wrapping_add(k as u64),
            hourly_step_sigma: a.hourly_step_sigma,
            step_persistence: a.step_persistence,
            noise_sigma: a.noise_sigma,
            noise_phi: a.noise_phi,
            diurnal_amp: a.diurnal_amp,
            weekly_amp: a.weekly_amp,
            n_steps,
            start,
            timezone: tz,
        };
        let series = generate(&config).map_err(|e| err(Kind::Usage, "synth", e))?;
        let mut buf = Vec::new();
        series.write_csv(&mut buf).map_err(data_err("synth"))?;
        let path = a.out.join(format!("{area}.csv"));
        write_output(&path, &buf)?;
        log::info!("wrote {} ({} steps)", path.display(), n_steps);
    }
    Ok(())
}

pub fn ingest_check(a: DataArgs) -> Result<()> {
    let data = load_data(&a)?;
    let mut out = std::io::stdout().lock();
    let mut body = String::from("area,start_utc,end_utc,steps,missing,gap_runs,coverage\n");
    for d in &data {
        let g = gap_report(&d.series);
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            d.series.area(),
            format_timestamp(d.series.start()),
            format_timestamp(d.series.end()),
            d.series.len(),
            g.missing_count(),
            g.runs.len(),
            g.coverage_fraction
        ));
    }
    out.write_all(body.as_bytes()).map_err(data_err("output"))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let params = hyper_params(&a.forest)?;
    let data = load_data(&a.data)?;
    let tz = data[0].config.timezone;
    let end_month = match a.train_end {
        Some(m) => m,
        None => data
            .iter()
            .map(|d| YearMonth::containing(d.series.end(), tz))
            .max()
            .expect("at least one area"),
    };
    let window = (
        end_month.add_months(-(a.train_months as i32)).start_in(tz),
        end_month.start_in(tz),
    );
    log::info!(
        "training on [{}, {})",
        format_timestamp(window.0),
        format_timestamp(window.1)
    );
    let bank = train_bank(&inputs(&data), window, &params).map_err(forecast_error("train"))?;
    save_bank(&bank, &a.model).map_err(forecast_error("save model"))?;
    log::info!("saved {} forests to {}", bank.forest_count(), a.model.display());
    Ok(())
}

fn latest_origin(series: &ImbalanceSeries, config: &FeatureConfig) -> Option<DateTime<Utc>> {
    (0..series.len())
        .rev()
        .map(|i| series.timestamp_at(i))
        .find(|&t| build_feature_vector(series, t, config).is_ok())
}

pub fn forecast(a: ForecastArgs) -> Result<()> {
    check_coverage(a.coverage)?;
    require_exists(&a.model, "model file")?;
    let origins: Vec<DateTime<Utc>> = a
        .origins
        .iter()
        .map(|s| parse_timestamp(s).ok_or_else(|| format!("cannot parse origin `{s}`")))
        .collect::<std::result::Result<_, _>>()
        .map_err(usage("arguments"))?;
    let bank = load_bank(&a.model).map_err(forecast_error("load model"))?;
    let data = load_data(&a.data)?;
    let mut sheets = Vec::new();
    for d in &data {
        let Some(models) = bank.area(d.series.area()) else {
            log::warn!("{}: not in the model bank, skipped", d.series.area());
            continue;
        };
        let targets = if origins.is_empty() {
            let t = latest_origin(&d.series, &models.config).ok_or_else(|| {
                err(Kind::Data, "forecast", format!("{}: no origin with complete lags", d.series.area()))
            })?;
            vec![t]
        } else {
            origins.clone()
        };
        for t in targets {
            sheets.push(make_forecast(&bank, &d.series, t, a.coverage).map_err(|e| {
                err(Kind::Data, "forecast", format!("{} at {}: {e}", d.series.area(), format_timestamp(t)))
            })?);
        }
    }
    if sheets.is_empty() {
        return Err(err(Kind::Data, "forecast", "the model bank covers none of the loaded areas"));
    }
    let mut buf = Vec::new();
    write_forecast_csv(&sheets, a.with_median, &mut buf).map_err(data_err("output"))?;
    match &a.out {
        Some(path) => write_output(path, &buf),
        None => std::io::stdout().lock().write_all(&buf).map_err(data_err("output")),
    }
}

pub fn backtest(a: BacktestArgs) -> Result<()> {
    let params = hyper_params(&a.forest)?;
    check_coverage(a.coverage)?;
    if let Some(p) = &a.external_benchmark {
        require_exists(p, "external benchmark")?;
    }
    let data = load_data(&a.data)?;
    let mut protocol = BacktestProtocol {
        train_months: a.train_months,
        retrain_every_months: a.retrain_every,
        eval_range: None,
        eval_days: a.eval_days,
        coverage_level: a.coverage,
        params,
    };
    if a.eval_from.is_some() || a.eval_to.is_some() {
        let defaults: Vec<YearMonth> = data
            .iter()
            .flat_map(|d| protocol.eval_months(&d.series, d.config.timezone))
            .collect();
        let last_data = data
            .iter()
            .map(|d| YearMonth::containing(d.series.end() - Duration::seconds(STEP_SECONDS), d.config.timezone))
            .max()
            .unwrap();
        let from = a.eval_from.or_else(|| defaults.iter().min().copied()).unwrap_or(last_data);
        let to = a.eval_to.unwrap_or(last_data);
        protocol.eval_range = Some((from, to));
    }
    protocol.validate().map_err(|e| err(Kind::Usage, "arguments", e))?;
    let external = a
        .external_benchmark
        .as_ref()
        .map(|p| ingest_external_benchmark(p).map_err(|e| err(Kind::Data, "external benchmark", format!("{}: {e}", p.display()))))
        .transpose()?;
    let grid = run_backtest(&inputs(&data), &protocol, external.as_ref()).map_err(|e| match e {
        EvalError::Leakage { .. } => err(Kind::Internal, "backtest", e),
        EvalError::InvalidProtocol(_) => err(Kind::Usage, "backtest", e),
        _ => err(Kind::Data, "backtest", e),
    })?;
    log::info!(
        "{} of {} folds completed, {} records scored",
        grid.completed_folds(),
        grid.folds.len(),
        grid.records.len()
    );
    let written = render_report(&grid, &a.out, a.dump_records).map_err(|e| match e {
        EvalError::EmptyGrid => err(Kind::Data, "report", "no fold could be evaluated"),
        _ => err(Kind::Data, "report", e),
    })?;
    log::info!("wrote {} report files to {}", written.len(), a.out.display());
    Ok(())
}
