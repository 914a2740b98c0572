//! `imbalance`: synthesize, check, train, forecast and backtest.

mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imbalance_qrf::YearMonth;

#[derive(Debug, Parser)]
#[command(name = "imbalance", version, about = "Quantile regression forest forecasts of 5-minute power imbalances")]
struct Cli {
    /// Worker threads for training and forecasting (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    /// More log output on standard error (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic series in the ingest CSV format, one file per area.
    Synth(SynthArgs),
    /// Parse series and report span, gaps and coverage.
    IngestCheck(DataArgs),
    /// Train a model bank and save it.
    Train(TrainArgs),
    /// Forecast all horizons from one or more origins.
    Forecast(ForecastArgs),
    /// Rolling-origin backtest with naive and external benchmarks.
    Backtest(BacktestArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory; receives `<area>.csv` per area.
    #[arg(long)]
    out: PathBuf,
    /// Area ids to generate (repeatable); area k uses seed + k.
    #[arg(long = "area", default_value = "NO1")]
    areas: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First month, starting at local midnight in Europe/Oslo.
    #[arg(long, default_value = "2015-01")]
    start: YearMonth,
    /// Length in whole months (ignored when --steps is given).
    #[arg(long, default_value_t = 4)]
    months: u32,
    /// Exact number of 5-minute steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 40.0)]
    hourly_step_sigma: f64,
    #[arg(long, default_value_t = 0.8)]
    step_persistence: f64,
    #[arg(long, default_value_t = 8.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.6)]
    noise_phi: f64,
    #[arg(long, default_value_t = 30.0)]
    diurnal_amp: f64,
    #[arg(long, default_value_t = 15.0)]
    weekly_amp: f64,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory of `<area>.csv` files, or a single CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Area configuration TOML (default: built-in NO1-NO5).
    #[arg(long)]
    areas: Option<PathBuf>,
    /// Area id for a single-file --data (default: the file stem).
    #[arg(long)]
    area: Option<String>,
}

#[derive(Debug, Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    trees: u32,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    min_leaf: u32,
    #[arg(long, default_value_t = 0.7)]
    feature_fraction: f64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    /// Output bank file.
    #[arg(long)]
    model: PathBuf,
    /// Calendar months of training data.
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..))]
    train_months: u32,
    /// First month after the training window (default: the latest month
    /// boundary inside the data).
    #[arg(long)]
    train_end: Option<YearMonth>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Bank file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Forecast origin(s), UTC on the 5-minute grid (default: latest usable origin).
    #[arg(long = "origin")]
    origins: Vec<String>,
    #[arg(long, default_value_t = 0.95)]
    coverage: f64,
    /// Append a `median_mw` column.
    #[arg(long)]
    with_median: bool,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..))]
    train_months: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    retrain_every: u32,
    /// First evaluation month (default: first month with enough history).
    #[arg(long)]
    eval_from: Option<YearMonth>,
    /// Last evaluation month (default: last month with data).
    #[arg(long)]
    eval_to: Option<YearMonth>,
    /// Evaluate only the first N days of each fold.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    eval_days: Option<u32>,
    #[arg(long, default_value_t = 0.95)]
    coverage: f64,
    /// External forecasts in the forecast CSV schema.
    #[arg(long)]
    external_benchmark: Option<PathBuf>,
    /// Also write every scored record to records.csv.
    #[arg(long)]
    dump_records: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(70);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => cmd::synth(a),
        Command::IngestCheck(a) => cmd::ingest_check(a),
        Command::Train(a) => cmd::train(a),
        Command::Forecast(a) => cmd::forecast(a),
        Command::Backtest(a) => cmd::backtest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.stage, e.message);
            ExitCode::from(e.kind.code())
        }
    }
}
