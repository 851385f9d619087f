//! Command-line front end: argument parsing, run configuration and the
//! subcommand implementations.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use lsq::market_data::BarSchema;
use lsq::synth::SynthConfig;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "lsq", version, about = "Long-short equity research toolkit")]
pub struct Cli {
    /// Log level for standard error (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate bar and fundamentals files and write normalised copies.
    Ingest {
        #[arg(long)]
        bars: PathBuf,
        #[arg(long)]
        fundamentals: Option<PathBuf>,
        /// JSON file mapping bar fields to column names.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic market with a planted signal.
    Synth {
        #[arg(long, default_value_t = 100)]
        symbols: usize,
        #[arg(long, default_value_t = 750)]
        days: usize,
        #[arg(long, default_value_t = 0.5)]
        signal: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the factor panels named by the config.
    Factors(RunArgs),
    /// Quantile analysis of one factor.
    AnalyzeFactor {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        factor: String,
        #[arg(long)]
        quantiles: Option<usize>,
        /// Comma-separated forward horizons in sessions.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
    },
    /// Walk-forward backtest with tear sheet.
    Backtest(RunArgs),
    /// Out-of-sample accuracy of algorithms and ensemble presets.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated algorithm tags and/or ensemble presets.
        #[arg(long, value_delimiter = ',', required = true)]
        algorithms: Vec<String>,
    },
    /// Rebuild the tear sheet of an earlier backtest folder.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Defaults to `<run>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config file plus overrides shared by the data-driven subcommands.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output folder (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ensemble preset (overrides `preset`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Zero commission and slippage.
    #[arg(long)]
    pub frictionless: bool,
    /// Any config field, e.g. `--set backtest.rebalance=weekly`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl RunArgs {
    pub fn load(&self) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(p) = &self.preset {
            overrides.push(format!("preset={}", serde_json::Value::String(p.clone())));
        }
        if self.frictionless {
            overrides.push("backtest.commission_per_share=0".into());
            overrides.push("backtest.slippage=0".into());
        }
        let mut cfg = RunConfig::load(&self.config, &overrides)?;
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            bars,
            fundamentals,
            schema,
            out,
        } => {
            let schema = match schema {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)?;
                    let de = &mut serde_json::Deserializer::from_str(&text);
                    serde_path_to_error::deserialize::<_, BarSchema>(de)
                        .map_err(|e| anyhow::anyhow!("schema {}: at `{}`: {}", p.display(), e.path(), e.inner()))?
                }
                None => BarSchema::default(),
            };
            commands::ingest(&bars, fundamentals.as_deref(), &schema, &out)?;
        }
        Command::Synth {
            symbols,
            days,
            signal,
            seed,
            out,
        } => commands::synth(&SynthConfig::new(symbols, days, signal, seed), &out)?,
        Command::Factors(args) => commands::factors(&args.load()?)?,
        Command::AnalyzeFactor {
            run,
            factor,
            quantiles,
            horizons,
        } => {
            let mut cfg = run.load()?;
            if let Some(q) = quantiles {
                cfg.analyze.n_quantiles = q;
            }
            if let Some(h) = horizons {
                cfg.analyze.horizons = h;
            }
            cfg.finish()?;
            commands::analyze_factor(&cfg, &factor)?;
        }
        Command::Backtest(args) => {
            commands::backtest(&args.load()?)?;
        }
        Command::Compare { run, algorithms } => {
            commands::compare(&run.load()?, &algorithms)?;
        }
        Command::Report { run, out } => {
            let out = out.unwrap_or_else(|| run.join("report"));
            commands::report(&run, &out)?;
        }
    }
    Ok(())
}
