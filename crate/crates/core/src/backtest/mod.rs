//! Walk-forward long/short simulation.
//!
//! At each rebalance date the engine asks a [`Scorer`] for conviction
//! scores using data up to that close, sizes equal-weight dollar-neutral
//! targets in whole shares, and fills the difference at the next session's
//! open with slippage and per-share commission.

mod engine;
mod portfolio;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dataset::WindowOptions;
use crate::error::{Error, Result};
use crate::factors::WinsorLimits;
use crate::market_data::Refresh;

pub use engine::{
    prepare, read_marks_csv, run_backtest, run_backtest_through, BacktestResult, Decision, EnsembleScorer, EquityPoint,
    LatentScorer, PositionRecord, Prepared, RebalanceMark, ScoredUniverse, Scorer,
};
pub use portfolio::{apply_fills, Fill, PortfolioState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rebalance {
    #[default]
    Daily,
    Weekly,
    Monthly,
}

/// Indices of rebalance sessions: every session, the first session of each
/// ISO week, or the first session of each month.
pub fn rebalance_dates(calendar: &[NaiveDate], mode: Rebalance) -> Vec<usize> {
    let mut out = Vec::new();
    for (t, d) in calendar.iter().enumerate() {
        let first = match mode {
            Rebalance::Daily => true,
            Rebalance::Weekly => t == 0 || calendar[t - 1].iso_week() != d.iso_week(),
            Rebalance::Monthly => t == 0 || (calendar[t - 1].year(), calendar[t - 1].month()) != (d.year(), d.month()),
        };
        if first {
            out.push(t);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    /// Training window in sessions.
    pub window: usize,
    /// Label horizon in sessions.
    pub horizon: usize,
    pub rebalance: Rebalance,
    pub n_long: usize,
    pub n_short: usize,
    /// Allowed gross leverage after a fully filled rebalance.
    pub leverage_band: [f64; 2],
    pub commission_per_share: f64,
    /// Proportional price concession on every fill.
    pub slippage: f64,
    pub initial_capital: f64,
    pub label_upper: f64,
    pub label_lower: f64,
    pub exclude_zero: bool,
    pub winsor: WinsorLimits,
    pub universe_size: usize,
    /// Sessions of dollar volume averaged for universe ranking.
    pub universe_lookback: usize,
    pub universe_refresh: Refresh,
    pub seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            window: 200,
            horizon: 5,
            rebalance: Rebalance::Daily,
            n_long: 250,
            n_short: 250,
            leverage_band: [0.96, 1.05],
            commission_per_share: 0.001,
            slippage: 0.0005,
            initial_capital: 10_000_000.0,
            label_upper: 0.3,
            label_lower: 0.3,
            exclude_zero: false,
            winsor: WinsorLimits::default(),
            universe_size: 1500,
            universe_lookback: 21,
            universe_refresh: Refresh::Monthly,
            seed: 0,
        }
    }
}

impl BacktestConfig {
    /// Same configuration with zero commission and slippage.
    pub fn frictionless(mut self) -> Self {
        self.commission_per_share = 0.0;
        self.slippage = 0.0;
        self
    }

    pub fn window_options(&self) -> WindowOptions {
        WindowOptions {
            exclude_zero: self.exclude_zero,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.leverage_band;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::invalid("leverage band must satisfy 0 < min <= max"));
        }
        if !(self.initial_capital > 0.0) {
            return Err(Error::invalid("initial capital must be positive"));
        }
        if self.horizon == 0 || self.window <= self.horizon {
            return Err(Error::invalid("need horizon >= 1 and window > horizon"));
        }
        if self.n_long + self.n_short == 0 {
            return Err(Error::invalid("need at least one long or short position"));
        }
        if self.commission_per_share < 0.0 || !(0.0..1.0).contains(&self.slippage) {
            return Err(Error::invalid("costs must be non-negative and slippage below 1"));
        }
        if self.universe_size == 0 || self.universe_lookback == 0 {
            return Err(Error::invalid("universe size and lookback must be at least 1"));
        }
        WinsorLimits::new(self.winsor.lower, self.winsor.upper)?;
        if self.label_upper + self.label_lower > 1.0 {
            return Err(Error::invalid("label fractions sum above 1"));
        }
        Ok(())
    }
}
