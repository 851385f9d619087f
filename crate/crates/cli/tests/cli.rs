use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Datelike, NaiveDate};

fn lsq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsq"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small synthetic market and a config pointing at it.
fn setup(extra_backtest: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let o = lsq(
        &[
            "synth",
            "--symbols",
            "20",
            "--days",
            "300",
            "--signal",
            "0.5",
            "--seed",
            "3",
            "--out",
            "data",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"bars": "data/bars.csv", "fundamentals": "data/fundamentals.csv", "output_dir": "out",
                "backtest": {{"window": 60, "n_long": 5, "n_short": 5{extra_backtest}}},
                "compare": {{"window": 120}}}}"#
        ),
    )
    .unwrap();
    (dir, cfg)
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn synth_then_backtest_writes_every_output() {
    let (dir, _) = setup("");
    let o = lsq(&["backtest", "--config", "run.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for f in [
        "manifest.json",
        "config.json",
        "tearsheet.json",
        "equity.csv",
        "fills.csv",
        "positions.csv",
        "marks.csv",
        "rebalances.csv",
        "conviction.csv",
        "feature_log.csv",
        "returns_daily.csv",
        "returns_weekly.csv",
        "returns_monthly.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);

    // The report subcommand rebuilds the same headline numbers.
    let o = lsq(&["report", "--run", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("tearsheet.json")).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report/tearsheet.json")).unwrap()).unwrap();
    for key in ["total_return_pct", "sharpe", "max_drawdown_pct", "fills", "sessions"] {
        assert_eq!(a[key], b[key], "{key}");
    }
}

#[test]
fn weekly_rebalances_once_per_iso_week() {
    let (dir, _) = setup(r#", "rebalance": "weekly""#);
    let o = lsq(&["backtest", "--config", "run.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let calendar: Vec<NaiveDate> = {
        let mut d: Vec<NaiveDate> = read_csv(&dir.path().join("data/bars.csv"))
            .iter()
            .map(|r| r[0].parse().unwrap())
            .collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    let decided: Vec<NaiveDate> = read_csv(&dir.path().join("out/rebalances.csv"))
        .iter()
        .map(|r| r[0].parse().unwrap())
        .collect();
    assert!(!decided.is_empty());
    let first = calendar.iter().position(|d| *d == decided[0]).unwrap();
    // Every week that starts at or after the first decision and has a
    // following session to fill on.
    let weeks = (first..calendar.len() - 1)
        .filter(|&t| t == 0 || calendar[t - 1].iso_week() != calendar[t].iso_week())
        .count();
    assert_eq!(decided.len(), weeks);
    let mut seen: Vec<_> = decided.iter().map(|d| d.iso_week()).collect();
    seen.dedup();
    assert_eq!(seen.len(), decided.len());
}

#[test]
fn schema_error_names_the_field() {
    let (dir, _) = setup("");
    let o = lsq(
        &["backtest", "--config", "run.json", "--set", "backtest.windw=3"],
        dir.path(),
    );
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert!(msg.contains("backtest.windw"), "{msg}");

    fs::write(
        dir.path().join("bad.json"),
        r#"{"bars": "data/bars.csv", "backtest": {"n_long": "many"}}"#,
    )
    .unwrap();
    let o = lsq(&["backtest", "--config", "bad.json"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("backtest.n_long"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.json"), r#"{"bars": "nowhere/bars.csv"}"#).unwrap();
    let o = lsq(&["factors", "--config", "run.json"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nowhere/bars.csv"), "{}", stderr(&o));

    let o = lsq(&["backtest", "--config", "absent.json"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent.json"), "{}", stderr(&o));
}

#[test]
fn compare_single_algorithm_gives_one_row() {
    let (dir, _) = setup("");
    let o = lsq(
        &["compare", "--config", "run.json", "--algorithms", "gaussian_nb"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("out/accuracy.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "gaussian_nb");
    let acc: f64 = rows[0][2].parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn unknown_tag_lists_valid_ones() {
    let (dir, _) = setup("");
    let o = lsq(
        &["compare", "--config", "run.json", "--algorithms", "gaussian_nb,svm9"],
        dir.path(),
    );
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert!(msg.contains("svm9"), "{msg}");
    for tag in lsq::classifiers::ALGORITHM_TAGS {
        assert!(msg.contains(tag), "{tag} not listed: {msg}");
    }
}

#[test]
fn repeated_runs_are_identical() {
    let (dir, _) = setup("");
    for out in ["a", "b"] {
        let o = lsq(
            &["backtest", "--config", "run.json", "--out", out, "--seed", "5"],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["tearsheet.json", "fills.csv", "equity.csv", "conviction.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn factors_and_analysis_run() {
    let (dir, _) = setup("");
    let o = lsq(&["factors", "--config", "run.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out/factors.csv").is_file());
    let o = lsq(
        &[
            "analyze-factor",
            "--config",
            "run.json",
            "--out",
            "q",
            "--factor",
            "cmo",
            "--quantiles",
            "4",
            "--horizons",
            "1,5",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("q/quantile_report.csv"));
    assert_eq!(rows.len(), 4 * 2);
    let o = lsq(
        &[
            "analyze-factor",
            "--config",
            "run.json",
            "--out",
            "q2",
            "--factor",
            "nope",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
}
