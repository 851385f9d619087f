//! One function per subcommand. Each writes its outputs and a
//! `manifest.json` into its output folder, including when it fails.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use lsq::analytics::{quantile_report, QuantileReport, TearSheet};
use lsq::backtest::{prepare, read_marks_csv, run_backtest, BacktestResult, EnsembleScorer, Prepared};
use lsq::classifiers::ALGORITHM_TAGS;
use lsq::compare::{compare as compare_accuracy, latest_window, write_accuracy_csv, AccuracyRow};
use lsq::ensemble::{write_conviction, EnsembleSpec, CONVICTION_HEADER, PRESETS};
use lsq::factors::standardize::WinsorLimits;
use lsq::market_data::{ingest_bars, ingest_fundamentals, BarSchema, IngestReport};
use lsq::selection::{write_feature_log, FEATURE_LOG_HEADER};
use lsq::synth::{generate, SynthConfig};
use lsq::{compute_factors, BarSet, Fundamentals};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

pub fn fingerprint(path: &Path) -> Result<InputFile> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputFile {
        path: path.to_path_buf(),
        bytes: data.len() as u64,
        sha256: format!("{:x}", Sha256::digest(&data)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    /// `ok` or `error`.
    pub status: String,
    pub error: Option<String>,
    pub version: String,
    pub inputs: Vec<InputFile>,
    /// File names inside the output folder.
    pub outputs: Vec<String>,
    pub diagnostics: Vec<String>,
}

/// Output folder that records what was written to it.
pub struct RunDir {
    pub path: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    pub fn create(path: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(RunDir {
            path: path.to_path_buf(),
            manifest: Manifest {
                command: command.into(),
                status: "running".into(),
                error: None,
                version: env!("CARGO_PKG_VERSION").into(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                diagnostics: Vec::new(),
            },
        })
    }

    /// Creates `name` for writing and records it.
    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path.join(name);
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        self.note(name);
        Ok(BufWriter::new(f))
    }

    pub fn note(&mut self, name: &str) {
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_string());
        }
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path.join(name), text).with_context(|| format!("writing {name}"))?;
        self.note(name);
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let f = fingerprint(path)?;
        self.manifest.inputs.push(f);
        Ok(())
    }

    pub fn diagnostic(&mut self, msg: impl Into<String>) {
        self.manifest.diagnostics.push(msg.into());
    }

    /// Writes `manifest.json` with the outcome of `result` and passes it on.
    pub fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        match &result {
            Ok(_) => self.manifest.status = "ok".into(),
            Err(e) => {
                self.manifest.status = "error".into();
                self.manifest.error = Some(format!("{e:#}"));
            }
        }
        self.manifest.outputs.sort();
        let m = self.manifest.clone();
        self.json("manifest.json", &m)?;
        result
    }
}

/// Runs `body` inside a fresh output folder and always leaves a manifest.
fn in_run_dir<T>(dir: &Path, command: &str, body: impl FnOnce(&mut RunDir) -> Result<T>) -> Result<T> {
    let mut run = RunDir::create(dir, command)?;
    let out = body(&mut run);
    run.finish(out)
}

fn ingest_report_lines(what: &str, r: &IngestReport) -> Vec<String> {
    let mut out = vec![format!(
        "{what}: {} rows read, {} accepted, {} rejected, {} duplicates",
        r.rows_read, r.accepted, r.rejected, r.duplicates
    )];
    out.extend(r.diagnostics.iter().map(|d| format!("{what}: {d}")));
    out
}

/// Bars and fundamentals named by `cfg`, fingerprinted into `run`.
pub fn load_market(cfg: &RunConfig, run: &mut RunDir) -> Result<(BarSet, Option<Fundamentals>)> {
    run.input(&cfg.bars)?;
    let (bars, report) =
        ingest_bars(&cfg.bars, &cfg.schema).with_context(|| format!("loading bars {}", cfg.bars.display()))?;
    for line in ingest_report_lines("bars", &report) {
        run.diagnostic(line);
    }
    let fundamentals = match &cfg.fundamentals {
        Some(p) => {
            run.input(p)?;
            let (f, report) =
                ingest_fundamentals(p).with_context(|| format!("loading fundamentals {}", p.display()))?;
            for line in ingest_report_lines("fundamentals", &report) {
                run.diagnostic(line);
            }
            Some(f)
        }
        None => None,
    };
    Ok((bars, fundamentals))
}

pub fn prepare_run(cfg: &RunConfig, run: &mut RunDir) -> Result<Prepared> {
    let (bars, fundamentals) = load_market(cfg, run)?;
    let prepared = prepare(&bars, fundamentals.as_ref(), &cfg.registry()?, &cfg.backtest)?;
    Ok(prepared)
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub bars: IngestReport,
    pub fundamentals: Option<IngestReport>,
    pub balance_sheet_mismatches: usize,
    pub symbols: usize,
    pub sessions: usize,
}

/// Validates and normalises input files into `out`.
pub fn ingest(bars: &Path, fundamentals: Option<&Path>, schema: &BarSchema, out: &Path) -> Result<IngestSummary> {
    in_run_dir(out, "ingest", |run| {
        run.input(bars)?;
        let (set, bar_report) =
            ingest_bars(bars, schema).with_context(|| format!("loading bars {}", bars.display()))?;
        set.write_csv(run.file("bars.csv")?)?;
        let (mut fund_report, mut mismatches) = (None, 0);
        if let Some(p) = fundamentals {
            run.input(p)?;
            let (f, r) = ingest_fundamentals(p).with_context(|| format!("loading fundamentals {}", p.display()))?;
            f.write_csv(run.file("fundamentals.csv")?)?;
            let bad = f.validate_balance_sheet(1e-6);
            mismatches = bad.len();
            for b in bad.iter().take(50) {
                run.diagnostic(format!(
                    "{} {}: assets {} vs liabilities + equity {}",
                    b.date, b.symbol, b.assets, b.liabilities_plus_equity
                ));
            }
            fund_report = Some(r);
        }
        let summary = IngestSummary {
            symbols: set.symbols().len(),
            sessions: set.dates().len(),
            bars: bar_report,
            fundamentals: fund_report,
            balance_sheet_mismatches: mismatches,
        };
        run.json("ingest_report.json", &summary)?;
        log::info!(
            "ingested {} symbols over {} sessions ({} bar rows rejected)",
            summary.symbols,
            summary.sessions,
            summary.bars.rejected
        );
        Ok(summary)
    })
}

/// Writes `bars.csv`, `fundamentals.csv`, `latent.csv` and `synth.json`.
pub fn synth(cfg: &SynthConfig, out: &Path) -> Result<()> {
    in_run_dir(out, "synth", |run| {
        let market = generate(cfg)?;
        market.write(&run.path)?;
        for f in ["bars.csv", "fundamentals.csv", "latent.csv"] {
            run.note(f);
        }
        run.json("synth.json", cfg)?;
        log::info!(
            "synthetic market: {} symbols x {} sessions, signal strength {}",
            cfg.n_symbols,
            cfg.n_days,
            cfg.signal_strength
        );
        Ok(())
    })
}

/// Raw and standardized factor panels in long format, plus the universe.
pub fn factors(cfg: &RunConfig) -> Result<()> {
    in_run_dir(&cfg.output_dir, "factors", |run| {
        run.json("config.json", cfg)?;
        let (bars, fundamentals) = load_market(cfg, run)?;
        let registry = cfg.registry()?;
        run.json("registry.json", &registry)?;
        let raw = compute_factors(&bars, fundamentals.as_ref(), &registry)?;
        raw.write_long_csv(run.file("factors.csv")?)?;
        let prepared = prepare(&bars, fundamentals.as_ref(), &registry, &cfg.backtest)?;
        prepared.factors.write_long_csv(run.file("factors_standardized.csv")?)?;
        prepared.universe.write_csv(run.file("universe.csv")?)?;
        log::info!("{} factors written to {}", raw.len(), run.path.display());
        Ok(())
    })
}

/// Quantile analysis of one factor against forward returns.
pub fn analyze_factor(cfg: &RunConfig, factor: &str) -> Result<QuantileReport> {
    in_run_dir(&cfg.output_dir, "analyze-factor", |run| {
        run.json("config.json", cfg)?;
        let (bars, fundamentals) = load_market(cfg, run)?;
        let registry = cfg.registry()?;
        let spec = registry
            .get(factor)
            .with_context(|| format!("unknown factor `{factor}`; known: {}", registry.names().join(", ")))?;
        let single = registry.subset(&[spec.name.as_str()])?;
        let raw = compute_factors(&bars, fundamentals.as_ref(), &single)?;
        let panel = raw.get(factor).expect("factor just computed");
        // Quantiles only need ranks, so nothing is clipped.
        let standardized = lsq::factors::standardize::standardize_cross_section(panel, WinsorLimits::NONE)?;
        let report = quantile_report(
            &standardized,
            &bars.close,
            cfg.analyze.n_quantiles,
            &cfg.analyze.horizons,
        )?;
        report.write_stats_csv(run.file("quantile_report.csv")?)?;
        report.write_cumulative_csv(run.file("quantile_cumulative.csv")?)?;
        report.write_spread_csv(run.file("quantile_spread.csv")?)?;
        report.write_distribution_csv(run.file("quantile_daily.csv")?)?;
        let mut w = csv::Writer::from_writer(run.file("factor_weighted.csv")?);
        w.write_record(["date", "return", "cumulative"])?;
        for ((d, r), c) in report
            .dates
            .iter()
            .zip(&report.factor_weighted)
            .zip(&report.factor_weighted_cumulative)
        {
            w.write_record([d.to_string(), r.to_string(), c.to_string()])?;
        }
        w.flush()?;
        for s in &report.stats {
            log::info!(
                "q{} h{}: mean {:+.5} (se {:.5}, n {})",
                s.quantile,
                s.horizon,
                s.mean,
                s.std_err,
                s.count
            );
        }
        Ok(report)
    })
}

pub struct BacktestOutcome {
    pub result: BacktestResult,
    pub tearsheet: TearSheet,
    pub dir: PathBuf,
}

/// Full walk-forward run with every output file.
pub fn backtest(cfg: &RunConfig) -> Result<BacktestOutcome> {
    let dir = cfg.output_dir.clone();
    in_run_dir(&dir, "backtest", |run| {
        run.json("config.json", cfg)?;
        let prepared = prepare_run(cfg, run)?;
        let mut scorer = EnsembleScorer::new(cfg.ensemble_spec()?, &cfg.backtest);
        let result = run_backtest(&prepared, &cfg.backtest, &mut scorer)?;
        for d in &result.diagnostics {
            run.diagnostic(d.clone());
        }
        if let Some(h) = &result.halted {
            run.diagnostic(format!("halted: {h}"));
        }
        write_backtest_files(run, &result)?;
        let tearsheet = TearSheet::from_backtest(&result)?;
        tearsheet.write(&run.path)?;
        run.note("tearsheet.json");
        for f in tearsheet.series_files.values() {
            run.note(f);
        }
        log::info!(
            "{} sessions, total return {:.2}%, Sharpe {}, max drawdown {:.2}%",
            tearsheet.sessions,
            tearsheet.total_return_pct,
            tearsheet.sharpe.map_or("n/a".to_string(), |s| format!("{s:.2}")),
            tearsheet.max_drawdown_pct
        );
        Ok(BacktestOutcome {
            result,
            tearsheet,
            dir: run.path.clone(),
        })
    })
}

fn write_backtest_files(run: &mut RunDir, result: &BacktestResult) -> Result<()> {
    result.write_equity_csv(run.file("equity.csv")?)?;
    result.write_fills_csv(run.file("fills.csv")?)?;
    result.write_positions_csv(run.file("positions.csv")?)?;
    result.write_marks_csv(run.file("marks.csv")?)?;

    let mut w = csv::Writer::from_writer(run.file("rebalances.csv")?);
    for m in &result.rebalances {
        w.serialize(m)?;
    }
    w.flush()?;

    let mut conviction = csv::Writer::from_writer(run.file("conviction.csv")?);
    conviction.write_record(CONVICTION_HEADER)?;
    let mut features = csv::Writer::from_writer(run.file("feature_log.csv")?);
    features.write_record(FEATURE_LOG_HEADER)?;
    for d in &result.decisions {
        write_conviction(&mut conviction, &d.conviction, &d.positions)?;
        write_feature_log(&mut features, d.conviction.date, &d.feature_scores)?;
    }
    conviction.flush()?;
    features.flush()?;
    Ok(())
}

type AlgorithmSplit = (Vec<String>, Vec<(String, EnsembleSpec)>);

/// Splits requested names into single algorithms and ensemble presets.
pub fn parse_algorithms(names: &[String]) -> Result<AlgorithmSplit> {
    if names.is_empty() {
        bail!("give at least one algorithm");
    }
    let (mut singles, mut ensembles) = (Vec::new(), Vec::new());
    for n in names {
        if ALGORITHM_TAGS.contains(&n.as_str()) {
            singles.push(n.clone());
        } else if PRESETS.contains(&n.as_str()) {
            ensembles.push((n.clone(), EnsembleSpec::preset(n)?));
        } else {
            bail!(
                "unknown algorithm `{n}`; valid tags: {}; ensemble presets: {}",
                ALGORITHM_TAGS.join(", "),
                PRESETS.join(", ")
            );
        }
    }
    Ok((singles, ensembles))
}

/// Accuracy table over a chronological split of the latest window.
pub fn compare(cfg: &RunConfig, names: &[String]) -> Result<Vec<AccuracyRow>> {
    let (singles, ensembles) = parse_algorithms(names)?;
    in_run_dir(&cfg.output_dir, "compare", |run| {
        run.json("config.json", cfg)?;
        let prepared = prepare_run(cfg, run)?;
        let window = latest_window(&prepared, cfg.compare.window, &cfg.backtest.window_options())?;
        let tags: Vec<&str> = singles.iter().map(String::as_str).collect();
        let rows = compare_accuracy(&window, &tags, &ensembles, &cfg.compare)?;
        write_accuracy_csv(&rows, run.file("accuracy.csv")?)?;
        for r in &rows {
            log::info!(
                "{:>14} overall {:.4}{}",
                r.name,
                r.overall_accuracy,
                r.top_bottom_accuracy
                    .map_or(String::new(), |a| format!(", top and bottom {a:.4}"))
            );
        }
        Ok(rows)
    })
}

/// Rebuilds the tear sheet of an earlier run from its `marks.csv`.
pub fn report(run_dir: &Path, out: &Path) -> Result<TearSheet> {
    let marks = run_dir.join("marks.csv");
    let fills = run_dir.join("fills.csv");
    in_run_dir(out, "report", |run| {
        run.input(&marks)?;
        let (points, benchmark) =
            read_marks_csv(File::open(&marks).with_context(|| format!("opening {}", marks.display()))?)?;
        let n_fills = match File::open(&fills) {
            Ok(f) => csv::Reader::from_reader(f).records().count(),
            Err(_) => {
                run.diagnostic("no fills.csv; fill count set to 0");
                0
            }
        };
        let halted = fs::read_to_string(run_dir.join("tearsheet.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| v.get("halted").and_then(|h| h.as_str().map(String::from)));
        let sheet = TearSheet::from_points(&points, &benchmark, n_fills, halted)?;
        sheet.write(&run.path)?;
        run.note("tearsheet.json");
        for f in sheet.series_files.values() {
            run.note(f);
        }
        log::info!(
            "report: total return {:.2}%, max drawdown {:.2}%",
            sheet.total_return_pct,
            sheet.max_drawdown_pct
        );
        Ok(sheet)
    })
}
