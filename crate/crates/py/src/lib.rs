//! Python bindings: synthetic data, config-driven runs, and a handful of
//! indicator and performance functions on plain lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lsq_cli::commands;
use lsq_cli::config::RunConfig;
use lsq_core::analytics::{max_drawdown as mdd, sharpe as sharpe_ratio, TRADING_DAYS};
use lsq_core::classifiers::ALGORITHM_TAGS;
use lsq_core::factors::indicators;
use lsq_core::synth::SynthConfig;

fn value_err(e: lsq_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: impl std::fmt::Display + std::fmt::Debug) -> PyErr {
    // `{:#}` keeps the whole context chain of a command error.
    PyRuntimeError::new_err(format!("{e:#}").replace("\n", " "))
}

/// Parses a JSON string into Python objects.
fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn load(config: PathBuf, overrides: Vec<String>, out: Option<PathBuf>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::load(&config, &overrides).map_err(|e| PyValueError::new_err(format!("{e:#}")))?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

/// Writes a seeded synthetic market (bars, fundamentals, latent score) to `out`.
#[pyfunction]
#[pyo3(signature = (out, symbols=100, days=750, signal=0.5, seed=0))]
fn synth(out: PathBuf, symbols: usize, days: usize, signal: f64, seed: u64) -> PyResult<()> {
    commands::synth(&SynthConfig::new(symbols, days, signal, seed), &out).map_err(run_err)
}

/// Runs a backtest from a JSON config and returns the tear sheet as a dict.
#[pyfunction]
#[pyo3(signature = (config, overrides=Vec::new(), out=None))]
fn backtest<'py>(
    py: Python<'py>,
    config: PathBuf,
    overrides: Vec<String>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = load(config, overrides, out)?;
    let outcome = commands::backtest(&cfg).map_err(run_err)?;
    let text = serde_json::to_string(&outcome.tearsheet).map_err(run_err)?;
    from_json(py, &text)
}

/// Out-of-sample accuracy rows for algorithm tags and ensemble presets.
#[pyfunction]
#[pyo3(signature = (config, algorithms, overrides=Vec::new(), out=None))]
fn compare<'py>(
    py: Python<'py>,
    config: PathBuf,
    algorithms: Vec<String>,
    overrides: Vec<String>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = load(config, overrides, out)?;
    let rows = commands::compare(&cfg, &algorithms).map_err(run_err)?;
    let text = serde_json::to_string(&rows).map_err(run_err)?;
    from_json(py, &text)
}

#[pyfunction]
fn algorithm_tags() -> Vec<&'static str> {
    ALGORITHM_TAGS.to_vec()
}

/// Missing values come back as NaN.
#[pyfunction]
fn ema(series: Vec<f64>, period: usize) -> PyResult<Vec<f64>> {
    indicators::ema(&series, period).map_err(value_err)
}

#[pyfunction]
fn atr(high: Vec<f64>, low: Vec<f64>, close: Vec<f64>, period: usize) -> PyResult<Vec<f64>> {
    indicators::atr(&high, &low, &close, period).map_err(value_err)
}

#[pyfunction]
fn adx(high: Vec<f64>, low: Vec<f64>, close: Vec<f64>, period: usize) -> PyResult<Vec<f64>> {
    Ok(indicators::adx(&high, &low, &close, period).map_err(value_err)?.adx)
}

#[pyfunction]
fn cmo(close: Vec<f64>, period: usize) -> PyResult<Vec<f64>> {
    indicators::cmo(&close, period).map_err(value_err)
}

#[pyfunction]
fn williams_r(high: Vec<f64>, low: Vec<f64>, close: Vec<f64>, period: usize) -> PyResult<Vec<f64>> {
    indicators::williams_r(&high, &low, &close, period).map_err(value_err)
}

#[pyfunction]
fn mfi(high: Vec<f64>, low: Vec<f64>, close: Vec<f64>, volume: Vec<f64>, period: usize) -> PyResult<Vec<f64>> {
    indicators::mfi(&high, &low, &close, &volume, period).map_err(value_err)
}

/// Annualised Sharpe ratio of daily returns.
#[pyfunction]
#[pyo3(signature = (returns, risk_free=0.0, periods_per_year=TRADING_DAYS))]
fn sharpe(returns: Vec<f64>, risk_free: f64, periods_per_year: f64) -> PyResult<f64> {
    sharpe_ratio(&returns, risk_free, periods_per_year).map_err(value_err)
}

/// Worst peak-to-trough decline as a (non-positive) fraction.
#[pyfunction]
fn max_drawdown(equity: Vec<f64>) -> PyResult<f64> {
    mdd(&equity).map_err(value_err)
}

#[pymodule]
fn lsq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(algorithm_tags, m)?)?;
    m.add_function(wrap_pyfunction!(ema, m)?)?;
    m.add_function(wrap_pyfunction!(atr, m)?)?;
    m.add_function(wrap_pyfunction!(adx, m)?)?;
    m.add_function(wrap_pyfunction!(cmo, m)?)?;
    m.add_function(wrap_pyfunction!(williams_r, m)?)?;
    m.add_function(wrap_pyfunction!(mfi, m)?)?;
    m.add_function(wrap_pyfunction!(sharpe, m)?)?;
    m.add_function(wrap_pyfunction!(max_drawdown, m)?)?;
    Ok(())
}
