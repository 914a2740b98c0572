use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn imbalance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imbalance"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = imbalance(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn synth_train_forecast_gives_one_row_per_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("bank.iqrf");
    ok(&["synth", "--seed", "7", "--months", "3", "--out", p(&data)]);
    ok(&[
        "train", "--data", p(&data), "--model", p(&model), "--train-months", "2", "--trees", "3", "--min-leaf", "40",
    ]);
    let out = ok(&[
        "forecast", "--data", p(&data), "--model", p(&model), "--origin", "2015-03-20T12:00:00Z", "--with-median",
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 25);
    assert_eq!(
        lines[0],
        "area,origin_utc,horizon_steps,point_mw,pi_lower_mw,pi_upper_mw,coverage_level,median_mw"
    );
    for (h, line) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], "NO1");
        assert_eq!(f[1], "2015-03-20T12:00:00Z");
        assert_eq!(f[2], (h + 1).to_string());
        let (point, lo, hi): (f64, f64, f64) = (f[3].parse().unwrap(), f[4].parse().unwrap(), f[5].parse().unwrap());
        assert!(lo <= hi && point.is_finite());
    }

    let check = ok(&["ingest-check", "--data", p(&data)]);
    let report = String::from_utf8(check.stdout).unwrap();
    assert!(report.starts_with("area,start_utc,end_utc,steps,missing,gap_runs,coverage\nNO1,"));
}

#[test]
fn backtest_on_fourteen_months_gives_two_folds_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--seed", "3", "--months", "14", "--out", p(&data)]);
    let run = |out: &Path, threads: &str| {
        ok(&[
            "backtest", "--data", p(&data), "--out", p(out), "--train-months", "12", "--trees", "1", "--min-leaf", "2000",
            "--eval-days", "1", "--threads", threads,
        ]);
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a, "1");
    run(&b, "2");
    let summary = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    let months: std::collections::BTreeSet<&str> =
        summary.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(months.into_iter().collect::<Vec<_>>(), ["2016-01", "2016-02"]);
    assert_eq!(summary.lines().count(), 1 + 2 * 24);
    assert_eq!(read_dir(&a), read_dir(&b));
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("d1"), dir.path().join("d2"));
    for d in [&d1, &d2] {
        ok(&["synth", "--seed", "5", "--months", "3", "--area", "NO1", "--area", "NO4", "--out", p(d)]);
    }
    assert_eq!(read_dir(&d1), read_dir(&d2));
    assert_ne!(
        std::fs::read(d1.join("NO1.csv")).unwrap(),
        std::fs::read(d1.join("NO4.csv")).unwrap()
    );
    let mut banks = Vec::new();
    for (k, threads) in ["1", "3"].into_iter().enumerate() {
        let model = dir.path().join(format!("m{k}.iqrf"));
        ok(&[
            "train", "--data", p(&d1), "--model", p(&model), "--train-months", "2", "--trees", "2", "--min-leaf", "60",
            "--seed", "11", "--threads", threads,
        ]);
        banks.push(std::fs::read(&model).unwrap());
    }
    assert_eq!(banks[0], banks[1]);
}

#[test]
fn exit_codes_separate_usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    assert_eq!(imbalance(&["train", "--bogus"]).status.code(), Some(2));
    let out = imbalance(&["ingest-check", "--data", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error: arguments:"));

    let bad = dir.path().join("NO1.csv");
    std::fs::write(&bad, "timestamp_utc,value_mw\nnot-a-time,1\n").unwrap();
    let out = imbalance(&["ingest-check", "--data", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error: ingest:"));

    let out = imbalance(&["forecast", "--data", p(&bad), "--model", p(&bad), "--coverage", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let help = String::from_utf8(imbalance(&["backtest", "--help"]).stdout).unwrap();
    for flag in ["--external-benchmark", "--threads", "--coverage", "--min-leaf", "--feature-fraction", "--seed"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}
