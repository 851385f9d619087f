//! Performance statistics and factor diagnostics.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestResult, EquityPoint};
use crate::error::{Error, Result};
use crate::panel::{is_missing, Panel};

pub const TRADING_DAYS: f64 = 252.0;
pub const ROLLING_BETA_WINDOW: usize = 126;
pub const TOP_MINUS_BOTTOM_SMOOTHING: usize = 22;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
fn sample_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Annualized Sharpe ratio of per-period returns against a per-period
/// risk-free rate, using the sample standard deviation.
pub fn sharpe(returns: &[f64], rf: f64, periods_per_year: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "Sharpe needs at least 2 returns, got {}",
            returns.len()
        )));
    }
    let excess: Vec<f64> = returns.iter().map(|r| r - rf).collect();
    let sd = sample_std(&excess);
    let m = mean(&excess);
    // Deviation lost in rounding noise counts as zero.
    if !(sd > 1e-14 * m.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate(
            "returns have zero deviation; Sharpe undefined".into(),
        ));
    }
    Ok(m / sd * periods_per_year.sqrt())
}

/// Worst peak-to-trough decline as a fraction of the running peak (≤ 0).
pub fn max_drawdown(equity: &[f64]) -> Result<f64> {
    if let Some(v) = equity.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::invalid(format!("equity must be positive, found {v}")));
    }
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &e in equity {
        peak = peak.max(e);
        worst = worst.min((e - peak) / peak);
    }
    Ok(worst)
}

/// Π(1 + r) − 1.
pub fn compound(returns: &[f64]) -> f64 {
    returns.iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0
}

/// Running Π(1 + r) − 1 after each period.
pub fn cumulative(returns: &[f64]) -> Vec<f64> {
    let mut acc = 1.0;
    returns
        .iter()
        .map(|r| {
            acc *= 1.0 + r;
            acc - 1.0
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaDecomposition {
    pub beta: f64,
    /// `beta × benchmark_t`.
    pub common: Vec<f64>,
    /// `r_t − common_t`.
    pub specific: Vec<f64>,
    /// Beta over the trailing window ending at each point; NaN until full.
    pub rolling_beta: Vec<f64>,
    pub cumulative_common: Vec<f64>,
    pub cumulative_specific: Vec<f64>,
}

/// OLS slope (with intercept) of `y` on `x`.
fn ols_beta(y: &[f64], x: &[f64]) -> Option<f64> {
    let (my, mx) = (mean(y), mean(x));
    let (mut cov, mut var) = (0.0, 0.0);
    for (a, b) in y.iter().zip(x) {
        cov += (a - my) * (b - mx);
        var += (b - mx) * (b - mx);
    }
    // Rounding leaves a residue of order (eps·|x|)² on a constant series.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (var > (1e-14 * scale).powi(2) * x.len() as f64 && var > 0.0).then(|| cov / var)
}

/// Single-factor split of portfolio returns into a benchmark-beta part and
/// a residual.
pub fn beta_decomposition(portfolio: &[f64], benchmark: &[f64]) -> Result<BetaDecomposition> {
    beta_decomposition_with(portfolio, benchmark, ROLLING_BETA_WINDOW)
}

pub fn beta_decomposition_with(portfolio: &[f64], benchmark: &[f64], window: usize) -> Result<BetaDecomposition> {
    if portfolio.len() != benchmark.len() {
        return Err(Error::LengthMismatch {
            expected: portfolio.len(),
            found: benchmark.len(),
        });
    }
    if portfolio.len() < 2 {
        return Err(Error::InsufficientHistory("beta needs at least 2 observations".into()));
    }
    let beta = ols_beta(portfolio, benchmark)
        .ok_or_else(|| Error::Degenerate("benchmark returns have zero variance".into()))?;
    let common: Vec<f64> = benchmark.iter().map(|b| beta * b).collect();
    let specific: Vec<f64> = portfolio.iter().zip(&common).map(|(r, c)| r - c).collect();
    let rolling_beta = (0..portfolio.len())
        .map(|t| {
            if window < 2 || t + 1 < window {
                return f64::NAN;
            }
            let s = t + 1 - window;
            ols_beta(&portfolio[s..=t], &benchmark[s..=t]).unwrap_or(f64::NAN)
        })
        .collect();
    Ok(BetaDecomposition {
        beta,
        cumulative_common: cumulative(&common),
        cumulative_specific: cumulative(&specific),
        common,
        specific,
        rolling_beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    Weekly,
    Monthly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReturn {
    /// `2021-W05` or `2021-03`.
    pub period: String,
    /// First and last session of the period present in the input.
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub ret: f64,
}

fn period_label(d: NaiveDate, period: Period) -> String {
    match period {
        Period::Weekly => {
            let w = d.iso_week();
            format!("{}-W{:02}", w.year(), w.week())
        }
        Period::Monthly => format!("{}-{:02}", d.year(), d.month()),
    }
}

/// Compounds daily returns within each ISO week or calendar month.
pub fn aggregate_returns(dates: &[NaiveDate], daily: &[f64], period: Period) -> Result<Vec<PeriodReturn>> {
    if dates.len() != daily.len() {
        return Err(Error::LengthMismatch {
            expected: dates.len(),
            found: daily.len(),
        });
    }
    let mut out: Vec<PeriodReturn> = Vec::new();
    let mut growth = 1.0;
    for (i, (d, r)) in dates.iter().zip(daily).enumerate() {
        let label = period_label(*d, period);
        match out.last_mut() {
            Some(last) if last.period == label => {
                growth *= 1.0 + r;
                last.end = *d;
                last.ret = growth - 1.0;
            }
            _ => {
                if i > 0 && out.iter().any(|p| p.period == label) {
                    return Err(Error::Malformed(format!("dates not in order at {d}")));
                }
                growth = 1.0 + r;
                out.push(PeriodReturn {
                    period: label,
                    start: *d,
                    end: *d,
                    ret: *r,
                });
            }
        }
    }
    Ok(out)
}

/// Scalars plus the series behind them. Series are written to their own
/// CSV files and referenced by name from `tearsheet.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TearSheet {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub sessions: usize,
    pub total_return_pct: f64,
    pub specific_return_pct: f64,
    pub common_return_pct: f64,
    /// `None` when undefined (fewer than two returns or no deviation).
    pub sharpe: Option<f64>,
    pub max_drawdown_pct: f64,
    pub annual_volatility: f64,
    pub daily_volatility: f64,
    pub beta: Option<f64>,
    pub mean_gross_leverage: f64,
    pub max_holdings: usize,
    pub fills: usize,
    pub halted: Option<String>,
    /// Series name → file name.
    pub series_files: BTreeMap<String, String>,
    #[serde(skip)]
    pub series: TearSheetSeries,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TearSheetSeries {
    pub dates: Vec<NaiveDate>,
    /// Aligned with `dates[1..]`.
    pub daily_returns: Vec<f64>,
    pub benchmark_returns: Vec<f64>,
    pub common: Vec<f64>,
    pub specific: Vec<f64>,
    pub rolling_beta: Vec<f64>,
    pub weekly: Vec<PeriodReturn>,
    pub monthly: Vec<PeriodReturn>,
    /// Aligned with `dates`.
    pub equity: Vec<f64>,
    pub long_short_ratio: Vec<f64>,
    pub holdings: Vec<usize>,
    pub gross_leverage: Vec<f64>,
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

impl TearSheet {
    pub fn from_backtest(result: &BacktestResult) -> Result<TearSheet> {
        Self::from_points(
            &result.equity,
            &result.benchmark,
            result.fills.len(),
            result.halted.clone(),
        )
    }

    /// From marks at every close and the benchmark return on each of those
    /// dates (the first is ignored).
    pub fn from_points(
        points: &[EquityPoint],
        benchmark: &[f64],
        fills: usize,
        halted: Option<String>,
    ) -> Result<TearSheet> {
        if benchmark.len() != points.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                found: benchmark.len(),
            });
        }
        let dates: Vec<NaiveDate> = points.iter().map(|p| p.date).collect();
        let equity: Vec<f64> = points.iter().map(|p| p.equity).collect();
        let daily: Vec<f64> = equity.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        let bench: Vec<f64> = benchmark.iter().skip(1).copied().collect();
        let sharpe = match sharpe(&daily, 0.0, TRADING_DAYS) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("{e}");
                None
            }
        };
        let decomposition = beta_decomposition(&daily, &bench).ok();
        let ret_dates = dates.get(1..).unwrap_or(&[]).to_vec();
        let daily_vol = if daily.len() >= 2 { sample_std(&daily) } else { 0.0 };
        let long_short_ratio = points
            .iter()
            .map(|p| {
                if p.short_value != 0.0 {
                    p.long_value / p.short_value.abs()
                } else {
                    f64::NAN
                }
            })
            .collect();
        let series = TearSheetSeries {
            weekly: aggregate_returns(&ret_dates, &daily, Period::Weekly)?,
            monthly: aggregate_returns(&ret_dates, &daily, Period::Monthly)?,
            common: decomposition.as_ref().map(|d| d.common.clone()).unwrap_or_default(),
            specific: decomposition.as_ref().map(|d| d.specific.clone()).unwrap_or_default(),
            rolling_beta: decomposition
                .as_ref()
                .map(|d| d.rolling_beta.clone())
                .unwrap_or_default(),
            long_short_ratio,
            holdings: points.iter().map(|p| p.holdings).collect(),
            gross_leverage: points.iter().map(|p| p.gross_leverage).collect(),
            dates,
            daily_returns: daily.clone(),
            benchmark_returns: bench,
            equity: equity.clone(),
        };
        let lev = &series.gross_leverage;
        Ok(TearSheet {
            start: series.dates.first().copied(),
            end: series.dates.last().copied(),
            sessions: series.dates.len(),
            total_return_pct: match (equity.first(), equity.last()) {
                (Some(a), Some(b)) => 100.0 * (b / a - 1.0),
                _ => 0.0,
            },
            specific_return_pct: 100.0 * compound(&series.specific),
            common_return_pct: 100.0 * compound(&series.common),
            sharpe,
            max_drawdown_pct: if equity.is_empty() {
                0.0
            } else {
                100.0 * max_drawdown(&equity)?
            },
            annual_volatility: daily_vol * TRADING_DAYS.sqrt(),
            daily_volatility: daily_vol,
            beta: decomposition.map(|d| d.beta),
            mean_gross_leverage: if lev.is_empty() { 0.0 } else { mean(lev) },
            max_holdings: series.holdings.iter().copied().max().unwrap_or(0),
            fills,
            halted,
            series_files: [
                ("daily_returns", "returns_daily.csv"),
                ("weekly_returns", "returns_weekly.csv"),
                ("monthly_returns", "returns_monthly.csv"),
                ("rolling_beta", "rolling_beta.csv"),
                ("common_specific", "common_specific.csv"),
                ("exposure", "exposure.csv"),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
            series,
        })
    }

    /// Writes `tearsheet.json` and every series file into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("tearsheet.json");
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        let s = &self.series;
        let ret_dates = s.dates.get(1..).unwrap_or(&[]);

        let mut w = self.writer(dir, "daily_returns")?;
        w.write_record(["date", "return", "benchmark"])?;
        for (i, d) in ret_dates.iter().enumerate() {
            w.write_record([d.to_string(), fmt(s.daily_returns[i]), fmt(s.benchmark_returns[i])])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;

        for (key, rows) in [("weekly_returns", &s.weekly), ("monthly_returns", &s.monthly)] {
            let mut w = self.writer(dir, key)?;
            w.write_record(["period", "start", "end", "return"])?;
            for p in rows {
                w.write_record([p.period.clone(), p.start.to_string(), p.end.to_string(), fmt(p.ret)])?;
            }
            w.flush().map_err(|e| Error::io(dir, e))?;
        }

        let mut w = self.writer(dir, "rolling_beta")?;
        w.write_record(["date", "beta"])?;
        for (d, b) in ret_dates.iter().zip(&s.rolling_beta) {
            w.write_record([d.to_string(), fmt(*b)])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;

        let mut w = self.writer(dir, "common_specific")?;
        w.write_record(["date", "total", "common", "specific"])?;
        for (i, d) in ret_dates.iter().enumerate() {
            if i < s.common.len() {
                w.write_record([
                    d.to_string(),
                    fmt(s.daily_returns[i]),
                    fmt(s.common[i]),
                    fmt(s.specific[i]),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir, e))?;

        let mut w = self.writer(dir, "exposure")?;
        w.write_record(["date", "equity", "gross_leverage", "long_short_ratio", "holdings"])?;
        for (i, d) in s.dates.iter().enumerate() {
            w.write_record([
                d.to_string(),
                fmt(s.equity[i]),
                fmt(s.gross_leverage[i]),
                fmt(s.long_short_ratio[i]),
                s.holdings[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
        Ok(())
    }

    fn writer(&self, dir: &Path, key: &str) -> Result<csv::Writer<std::fs::File>> {
        let name = &self.series_files[key];
        let path = dir.join(name);
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(csv::Writer::from_writer(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileStat {
    /// 1 = lowest factor values.
    pub quantile: usize,
    pub horizon: usize,
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileReport {
    pub n_quantiles: usize,
    pub horizons: Vec<usize>,
    /// One entry per (quantile, horizon).
    pub stats: Vec<QuantileStat>,
    /// Dates that were ranked.
    pub dates: Vec<NaiveDate>,
    /// `daily_means[q][i]`: equal-weight 1-day forward return of quantile
    /// `q + 1` on `dates[i]` (NaN if nothing in it had a next price).
    pub daily_means: Vec<Vec<f64>>,
    pub cumulative: Vec<Vec<f64>>,
    /// Demeaned-factor-weighted 1-day return, unit gross.
    pub factor_weighted: Vec<f64>,
    pub factor_weighted_cumulative: Vec<f64>,
    /// Per horizon: top minus bottom quantile mean on each date.
    pub top_minus_bottom: Vec<Vec<f64>>,
    /// Trailing 22-date mean of `top_minus_bottom` (NaN until full).
    pub top_minus_bottom_smoothed: Vec<Vec<f64>>,
}

/// Equal-count quantile of each of `m` ranked items: rank `r` (0-based)
/// falls in bucket `r·q / m`.
pub fn quantile_bucket(rank: usize, m: usize, q: usize) -> usize {
    rank * q / m
}

/// Per-date quantile ranks of `factor` against forward returns over each
/// horizon. Ties in the factor rank by symbol order.
pub fn quantile_report(
    factor: &Panel,
    close: &Panel,
    n_quantiles: usize,
    horizons: &[usize],
) -> Result<QuantileReport> {
    if n_quantiles < 2 {
        return Err(Error::invalid("need at least 2 quantiles"));
    }
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::invalid("horizons must be non-empty and positive"));
    }
    if !factor.same_axes(close) {
        return Err(Error::Malformed("factor and prices are on different grids".into()));
    }
    let (n_dates, n_sym) = factor.shape();
    let nh = horizons.len();
    let fwd = |t: usize, j: usize, h: usize| -> f64 {
        if t + h >= n_dates {
            return f64::NAN;
        }
        let (a, b) = (close.get(t, j), close.get(t + h, j));
        if a > 0.0 && b > 0.0 {
            b / a - 1.0
        } else {
            f64::NAN
        }
    };

    let mut sums = vec![vec![(0.0f64, 0.0f64, 0usize); nh]; n_quantiles];
    let mut dates = Vec::new();
    let mut daily_means = vec![Vec::new(); n_quantiles];
    let mut factor_weighted = Vec::new();
    let mut tmb = vec![Vec::new(); nh];
    for t in 0..n_dates {
        let mut items: Vec<(f64, usize)> = (0..n_sym)
            .map(|j| (factor.get(t, j), j))
            .filter(|(v, _)| !is_missing(*v))
            .collect();
        if items.len() < n_quantiles {
            continue;
        }
        items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let m = items.len();
        dates.push(factor.dates()[t]);
        // per quantile, per horizon: (sum, count) on this date
        let mut day = vec![vec![(0.0f64, 0usize); nh]; n_quantiles];
        let mut day1 = vec![(0.0f64, 0usize); n_quantiles];
        for (rank, &(_, j)) in items.iter().enumerate() {
            let q = quantile_bucket(rank, m, n_quantiles);
            for (hi, &h) in horizons.iter().enumerate() {
                let r = fwd(t, j, h);
                if !r.is_nan() {
                    let s = &mut sums[q][hi];
                    s.0 += r;
                    s.1 += r * r;
                    s.2 += 1;
                    day[q][hi].0 += r;
                    day[q][hi].1 += 1;
                }
            }
            let r1 = fwd(t, j, 1);
            if !r1.is_nan() {
                day1[q].0 += r1;
                day1[q].1 += 1;
            }
        }
        for q in 0..n_quantiles {
            let (s, c) = day1[q];
            daily_means[q].push(if c > 0 { s / c as f64 } else { f64::NAN });
        }
        for hi in 0..nh {
            let (top, bot) = (day[n_quantiles - 1][hi], day[0][hi]);
            tmb[hi].push(if top.1 > 0 && bot.1 > 0 {
                top.0 / top.1 as f64 - bot.0 / bot.1 as f64
            } else {
                f64::NAN
            });
        }
        // Factor weights: demeaned values over names with a next price.
        let usable: Vec<(f64, f64)> = items
            .iter()
            .map(|&(v, j)| (v, fwd(t, j, 1)))
            .filter(|(_, r)| !r.is_nan())
            .collect();
        let fw = if usable.is_empty() {
            f64::NAN
        } else {
            let mu = usable.iter().map(|p| p.0).sum::<f64>() / usable.len() as f64;
            let gross: f64 = usable.iter().map(|p| (p.0 - mu).abs()).sum();
            if gross > 0.0 {
                usable.iter().map(|(v, r)| (v - mu) / gross * r).sum()
            } else {
                0.0
            }
        };
        factor_weighted.push(fw);
    }
    if dates.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "no date has {n_quantiles} defined factor values"
        )));
    }

    let mut stats = Vec::with_capacity(n_quantiles * nh);
    for (q, row) in sums.iter().enumerate() {
        for (hi, &(s, ss, c)) in row.iter().enumerate() {
            let m = if c > 0 { s / c as f64 } else { f64::NAN };
            let se = if c > 1 {
                let var = (ss - c as f64 * m * m) / (c - 1) as f64;
                (var.max(0.0) / c as f64).sqrt()
            } else {
                f64::NAN
            };
            stats.push(QuantileStat {
                quantile: q + 1,
                horizon: horizons[hi],
                mean: m,
                std_err: se,
                count: c,
            });
        }
    }
    let nan_as_zero = |v: &Vec<f64>| -> Vec<f64> { v.iter().map(|r| if r.is_nan() { 0.0 } else { *r }).collect() };
    let cumulative_q = daily_means.iter().map(|s| cumulative(&nan_as_zero(s))).collect();
    let factor_weighted_cumulative = cumulative(&nan_as_zero(&factor_weighted));
    let smoothed = tmb
        .iter()
        .map(|s| rolling_mean(s, TOP_MINUS_BOTTOM_SMOOTHING))
        .collect();
    Ok(QuantileReport {
        n_quantiles,
        horizons: horizons.to_vec(),
        stats,
        dates,
        daily_means,
        cumulative: cumulative_q,
        factor_weighted,
        factor_weighted_cumulative,
        top_minus_bottom: tmb,
        top_minus_bottom_smoothed: smoothed,
    })
}

/// Trailing mean over `window` points, skipping NaN inside the window;
/// NaN before the window is full or when it holds no numbers.
pub fn rolling_mean(x: &[f64], window: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if window == 0 || t + 1 < window {
                return f64::NAN;
            }
            let w: Vec<f64> = x[t + 1 - window..=t].iter().copied().filter(|v| !v.is_nan()).collect();
            if w.is_empty() {
                f64::NAN
            } else {
                mean(&w)
            }
        })
        .collect()
}

impl QuantileReport {
    pub fn stat(&self, quantile: usize, horizon: usize) -> Option<&QuantileStat> {
        self.stats
            .iter()
            .find(|s| s.quantile == quantile && s.horizon == horizon)
    }

    /// `quantile,horizon,mean,std_err,count`
    pub fn write_stats_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.stats {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io("<quantile writer>", e))?;
        Ok(())
    }

    /// `date,q1..qN,factor_weighted`, cumulative returns.
    pub fn write_cumulative_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend((1..=self.n_quantiles).map(|q| format!("q{q}")));
        header.push("factor_weighted".into());
        w.write_record(&header)?;
        for (i, d) in self.dates.iter().enumerate() {
            let mut row = vec![d.to_string()];
            row.extend(self.cumulative.iter().map(|c| fmt(c[i])));
            row.push(fmt(self.factor_weighted_cumulative[i]));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<quantile writer>", e))?;
        Ok(())
    }

    /// `date,horizon,top_minus_bottom,smoothed`
    pub fn write_spread_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "horizon", "top_minus_bottom", "smoothed"])?;
        for (hi, h) in self.horizons.iter().enumerate() {
            for (i, d) in self.dates.iter().enumerate() {
                w.write_record([
                    d.to_string(),
                    h.to_string(),
                    fmt(self.top_minus_bottom[hi][i]),
                    fmt(self.top_minus_bottom_smoothed[hi][i]),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<quantile writer>", e))?;
        Ok(())
    }

    /// `date,quantile,return`: the per-date 1-day means behind the
    /// distribution plots.
    pub fn write_distribution_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "quantile", "return"])?;
        for (q, series) in self.daily_means.iter().enumerate() {
            for (d, r) in self.dates.iter().zip(series) {
                if !r.is_nan() {
                    w.write_record([d.to_string(), (q + 1).to_string(), r.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<quantile writer>", e))?;
        Ok(())
    }
}
