use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::portfolio::{Fill, PortfolioState};
use super::{rebalance_dates, BacktestConfig};
use crate::classifiers::Rows;
use crate::dataset::{build_training_window, forward_returns, quantile_labels, scoring_rows, LabelPanel};
use crate::ensemble::{select_positions, ConvictionVector, EnsembleSpec, FittedEnsemble, Positions};
use crate::error::{Error, Result};
use crate::factors::{compute_factors, FactorMatrix, FactorRegistry};
use crate::market_data::{build_universe_with, BarSet, Fundamentals, Universe};
use crate::panel::{is_missing, Panel, MISSING};
use crate::selection::FeatureScore;

/// Everything the loop reads, computed once up front. Each piece at date
/// `t` depends only on data up to `t` (labels excepted, which the training
/// window only reads `horizon` sessions back).
#[derive(Debug, Clone)]
pub struct Prepared {
    pub bars: BarSet,
    pub universe: Universe,
    /// Cross-sectionally standardized within the universe.
    pub factors: FactorMatrix,
    pub labels: LabelPanel,
}

pub fn prepare(
    bars: &BarSet,
    fundamentals: Option<&Fundamentals>,
    registry: &FactorRegistry,
    cfg: &BacktestConfig,
) -> Result<Prepared> {
    cfg.validate()?;
    let universe = build_universe_with(
        &bars.dollar_volume(),
        cfg.universe_size,
        cfg.universe_lookback,
        cfg.universe_refresh,
    )?;
    let raw = compute_factors(bars, fundamentals, registry)?;
    let factors = raw.standardized(Some(&universe), cfg.winsor)?;
    let mut fwd = forward_returns(&bars.close, cfg.horizon)?;
    mask_outside(&mut fwd, &universe);
    let labels = quantile_labels(&fwd, cfg.horizon, cfg.label_upper, cfg.label_lower)?;
    Ok(Prepared {
        bars: bars.clone(),
        universe,
        factors,
        labels,
    })
}

fn mask_outside(p: &mut Panel, u: &Universe) {
    for t in 0..p.n_dates() {
        for j in 0..p.n_symbols() {
            if !u.contains(t, j) {
                p.set(t, j, MISSING);
            }
        }
    }
}

/// Scores produced for one rebalance date.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredUniverse {
    /// Symbol indices, ascending.
    pub symbols: Vec<usize>,
    pub scores: Vec<f64>,
    pub selected: Vec<String>,
    pub feature_scores: Vec<FeatureScore>,
    pub training_rows: usize,
}

/// Produces conviction scores at the close of date index `t`, reading
/// nothing dated after `t`. `Ok(None)` means no view today.
pub trait Scorer {
    fn score(&mut self, data: &Prepared, t: usize) -> Result<Option<ScoredUniverse>>;
}

/// Refits the ensemble on the trailing window at every call.
#[derive(Debug, Clone)]
pub struct EnsembleScorer {
    pub spec: EnsembleSpec,
    pub window: usize,
    pub options: crate::dataset::WindowOptions,
    pub seed: u64,
    /// Start iterative members from the previous call's solution.
    pub warm_start: bool,
    previous: Option<FittedEnsemble>,
}

impl EnsembleScorer {
    pub fn new(spec: EnsembleSpec, cfg: &BacktestConfig) -> Self {
        EnsembleScorer {
            spec,
            window: cfg.window,
            options: cfg.window_options(),
            seed: cfg.seed,
            warm_start: true,
            previous: None,
        }
    }

    /// The most recent fit.
    pub fn last_fit(&self) -> Option<&FittedEnsemble> {
        self.previous.as_ref()
    }
}

impl Scorer for EnsembleScorer {
    fn score(&mut self, data: &Prepared, t: usize) -> Result<Option<ScoredUniverse>> {
        let window = match build_training_window(
            &data.factors,
            &data.labels,
            Some(&data.universe),
            t,
            self.window,
            &self.options,
        ) {
            Ok(w) => w,
            Err(Error::InsufficientHistory(msg)) => {
                log::debug!("{msg}");
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        if window.y.iter().all(|c| *c == window.y[0]) {
            log::debug!("{}: single label class in window, skipping", window.asof);
            return Ok(None);
        }
        if self.spec.k_features > window.n_features() {
            log::debug!(
                "{}: only {} usable features, fewer than {}",
                window.asof,
                window.n_features(),
                self.spec.k_features
            );
        }
        let mut spec = self.spec.clone();
        spec.k_features = spec.k_features.min(window.n_features());
        // Members get seed + m, so dates are spaced well apart.
        let seed = self.seed.wrapping_add((t as u64).wrapping_mul(1000));
        let warm = self.previous.as_ref().filter(|_| self.warm_start);
        let fitted = spec.fit_warm(&window, seed, warm)?;
        let (candidates, x) = scoring_rows(&data.factors, Some(&data.universe), t, &fitted.selected)?;
        let keep: Vec<usize> = (0..candidates.len())
            .filter(|&i| data.bars.close.get(t, candidates[i]) > 0.0)
            .collect();
        let width = fitted.selected.len();
        let x: Vec<f64> = keep
            .iter()
            .flat_map(|&i| x[i * width..(i + 1) * width].iter().copied())
            .collect();
        let scores = fitted.score(&Rows::new(&x, width)?)?;
        let out = ScoredUniverse {
            symbols: keep.iter().map(|&i| candidates[i]).collect(),
            scores,
            selected: fitted.selected.clone(),
            feature_scores: fitted.feature_scores.clone(),
            training_rows: window.n_rows(),
        };
        self.previous = Some(fitted);
        Ok(Some(out))
    }
}

/// Trades a known score panel directly (e.g. the synthetic latent score).
#[derive(Debug, Clone)]
pub struct LatentScorer {
    pub latent: Panel,
}

impl Scorer for LatentScorer {
    fn score(&mut self, data: &Prepared, t: usize) -> Result<Option<ScoredUniverse>> {
        if !self.latent.same_axes(&data.bars.close) {
            return Err(Error::Malformed("latent panel is on a different grid".into()));
        }
        let (mut symbols, mut scores) = (Vec::new(), Vec::new());
        for &j in data.universe.members(t) {
            let v = self.latent.get(t, j);
            if !is_missing(v) && data.bars.close.get(t, j) > 0.0 {
                symbols.push(j);
                scores.push(v);
            }
        }
        Ok((!symbols.is_empty()).then(|| ScoredUniverse {
            symbols,
            scores,
            selected: Vec::new(),
            feature_scores: Vec::new(),
            training_rows: 0,
        }))
    }
}

/// What was decided at one rebalance close.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub t: usize,
    pub conviction: ConvictionVector,
    /// Indices into `conviction`.
    pub positions: Positions,
    /// Symbol index and target shares for every name in the book.
    pub targets: Vec<(usize, i64)>,
    /// Target minus current shares, non-zero entries only.
    pub orders: Vec<(usize, i64)>,
    pub selected: Vec<String>,
    pub feature_scores: Vec<FeatureScore>,
    pub training_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub date: NaiveDate,
    pub equity: f64,
    pub cash: f64,
    pub long_value: f64,
    pub short_value: f64,
    pub gross_leverage: f64,
    pub holdings: usize,
}

const MARK_HEADER: [&str; 8] = [
    "date",
    "equity",
    "cash",
    "long_value",
    "short_value",
    "gross_leverage",
    "holdings",
    "benchmark",
];

#[derive(Debug, Serialize, Deserialize)]
struct MarkRow {
    date: NaiveDate,
    equity: f64,
    cash: f64,
    long_value: f64,
    short_value: f64,
    gross_leverage: f64,
    holdings: usize,
    benchmark: f64,
}

impl MarkRow {
    fn from_point(p: &EquityPoint, benchmark: f64) -> Self {
        MarkRow {
            date: p.date,
            equity: p.equity,
            cash: p.cash,
            long_value: p.long_value,
            short_value: p.short_value,
            gross_leverage: p.gross_leverage,
            holdings: p.holdings,
            benchmark,
        }
    }
}

/// Close marks and benchmark returns from a `marks.csv`.
pub fn read_marks_csv<R: std::io::Read>(reader: R) -> Result<(Vec<EquityPoint>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(reader);
    let (mut points, mut bench) = (Vec::new(), Vec::new());
    for row in r.deserialize::<MarkRow>() {
        let m = row?;
        points.push(EquityPoint {
            date: m.date,
            equity: m.equity,
            cash: m.cash,
            long_value: m.long_value,
            short_value: m.short_value,
            gross_leverage: m.gross_leverage,
            holdings: m.holdings,
        });
        bench.push(m.benchmark);
    }
    Ok((points, bench))
}

/// Book right after a rebalance's fills, valued at the fill session's open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceMark {
    pub decided: NaiveDate,
    pub filled: NaiveDate,
    pub equity: f64,
    pub gross_leverage: f64,
    pub holdings: usize,
    pub n_long: usize,
    pub n_short: usize,
    /// No order was skipped for lack of a price.
    pub fully_filled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub date: NaiveDate,
    pub symbol: String,
    pub shares: i64,
    pub price: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct BacktestResult {
    pub config: BacktestConfig,
    /// One point per close from the first decision on.
    pub equity: Vec<EquityPoint>,
    pub fills: Vec<Fill>,
    pub positions: Vec<PositionRecord>,
    pub rebalances: Vec<RebalanceMark>,
    pub decisions: Vec<Decision>,
    /// Equal-weighted universe return per equity point (0 at the first).
    pub benchmark: Vec<f64>,
    pub diagnostics: Vec<String>,
    /// Set when the run stopped early (bankruptcy).
    pub halted: Option<String>,
    pub final_state: PortfolioState,
}

impl BacktestResult {
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.equity.iter().map(|p| p.date).collect()
    }

    pub fn equity_values(&self) -> Vec<f64> {
        self.equity.iter().map(|p| p.equity).collect()
    }

    /// Simple returns between consecutive closes.
    pub fn daily_returns(&self) -> Vec<f64> {
        self.equity
            .windows(2)
            .map(|w| w[1].equity / w[0].equity - 1.0)
            .collect()
    }

    /// Benchmark returns aligned with [`Self::daily_returns`].
    pub fn benchmark_returns(&self) -> Vec<f64> {
        self.benchmark.iter().skip(1).copied().collect()
    }

    pub fn total_return(&self) -> f64 {
        match (self.equity.first(), self.equity.last()) {
            (Some(a), Some(b)) => b.equity / a.equity - 1.0,
            _ => 0.0,
        }
    }

    /// `date,equity,leverage`
    pub fn write_equity_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "equity", "leverage"])?;
        for p in &self.equity {
            w.write_record([p.date.to_string(), p.equity.to_string(), p.gross_leverage.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<equity writer>", e))?;
        Ok(())
    }

    /// `date,symbol,shares,price,commission`
    pub fn write_fills_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for f in &self.fills {
            w.serialize(f)?;
        }
        if self.fills.is_empty() {
            w.write_record(["date", "symbol", "shares", "price", "commission"])?;
        }
        w.flush().map_err(|e| Error::io("<fills writer>", e))?;
        Ok(())
    }

    /// Every close mark plus that day's benchmark return; [`read_marks_csv`]
    /// reads it back.
    pub fn write_marks_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (p, b) in self.equity.iter().zip(&self.benchmark) {
            w.serialize(MarkRow::from_point(p, *b))?;
        }
        if self.equity.is_empty() {
            w.write_record(MARK_HEADER)?;
        }
        w.flush().map_err(|e| Error::io("<marks writer>", e))?;
        Ok(())
    }

    /// `date,symbol,shares,price,value` at every close.
    pub fn write_positions_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.positions {
            w.serialize(p)?;
        }
        if self.positions.is_empty() {
            w.write_record(["date", "symbol", "shares", "price", "value"])?;
        }
        w.flush().map_err(|e| Error::io("<positions writer>", e))?;
        Ok(())
    }
}

/// Leg sizes shrunk in proportion when fewer names are scored than asked.
fn leg_sizes(n: usize, n_long: usize, n_short: usize) -> (usize, usize) {
    let want = n_long + n_short;
    if want <= n {
        (n_long, n_short)
    } else {
        (n * n_long / want, n * n_short / want)
    }
}

/// Whole shares worth `budget` at `price`, rounded toward zero.
fn shares_for(budget: f64, price: f64) -> i64 {
    (budget / price).trunc() as i64
}

fn book(longs: &[usize], shorts: &[usize], equity: f64, price: impl Fn(usize) -> f64) -> Vec<(usize, i64)> {
    let mut out = Vec::with_capacity(longs.len() + shorts.len());
    for (leg, sign) in [(longs, 1i64), (shorts, -1i64)] {
        if leg.is_empty() {
            continue;
        }
        let budget = 0.5 * equity / leg.len() as f64;
        for &j in leg {
            out.push((j, sign * shares_for(budget, price(j))));
        }
    }
    out.sort_unstable();
    out
}

pub fn run_backtest(data: &Prepared, cfg: &BacktestConfig, scorer: &mut dyn Scorer) -> Result<BacktestResult> {
    let n = data.bars.dates().len();
    if n == 0 {
        return Err(Error::Empty("bars".into()));
    }
    run_backtest_through(data, cfg, scorer, n - 1)
}

/// Like [`run_backtest`] but makes no decision after date index `last`
/// (the book is still marked to the end of the data).
pub fn run_backtest_through(
    data: &Prepared,
    cfg: &BacktestConfig,
    scorer: &mut dyn Scorer,
    last: usize,
) -> Result<BacktestResult> {
    cfg.validate()?;
    let dates = data.bars.dates();
    let symbols = data.bars.symbols();
    let n = dates.len();
    let close = &data.bars.close;
    let min_span = cfg.window + cfg.horizon + 1;
    if n < min_span {
        return Err(Error::InsufficientHistory(format!(
            "{n} sessions, need at least {min_span}"
        )));
    }
    let schedule = rebalance_dates(dates, cfg.rebalance);
    let mut is_rebalance = vec![false; n];
    for t in schedule {
        is_rebalance[t] = true;
    }

    let mut state = PortfolioState::new(dates[0], cfg.initial_capital, symbols.to_vec());
    let mut out = BacktestResult {
        config: cfg.clone(),
        equity: Vec::new(),
        fills: Vec::new(),
        positions: Vec::new(),
        rebalances: Vec::new(),
        decisions: Vec::new(),
        benchmark: Vec::new(),
        diagnostics: Vec::new(),
        halted: None,
        final_state: state.clone(),
    };
    let mut pending: Option<usize> = None;
    let mut started = false;

    for t in 0..n {
        // Execute yesterday's decision at today's open.
        if let Some(d) = pending.take() {
            let decision = &out.decisions[d];
            let decided_equity = out.equity.last().map(|p| p.equity).unwrap_or(state.equity);
            match execute(&mut state, decision, decided_equity, t, data, cfg) {
                Ok((fills, mark)) => {
                    out.fills.extend(fills);
                    out.rebalances.push(mark);
                }
                Err(e) => {
                    let msg = e.to_string();
                    log::warn!("halting: {msg}");
                    out.halted = Some(msg);
                    break;
                }
            }
        }

        state.mark(dates[t], (0..symbols.len()).map(|j| close.get(t, j)));
        if started {
            out.benchmark.push(benchmark_return(data, t));
            record_close(&mut out, &state);
            if state.equity <= 0.0 {
                let msg = format!("bankrupt on {}: equity {}", dates[t], state.equity);
                log::warn!("halting: {msg}");
                out.halted = Some(msg);
                break;
            }
        }

        if t > last || t + 1 >= n || !is_rebalance[t] {
            continue;
        }
        let scored = match scorer.score(data, t)? {
            Some(s) if !s.symbols.is_empty() => s,
            _ => {
                if !started {
                    continue;
                }
                let msg = format!("{}: no scores, holding positions", dates[t]);
                log::info!("{msg}");
                out.diagnostics.push(msg);
                continue;
            }
        };
        if !started {
            started = true;
            if t > 0 {
                out.diagnostics.push(format!("first tradable date {}", dates[t]));
            }
            out.benchmark.push(0.0);
            record_close(&mut out, &state);
        }
        let decision = decide(&state, scored, t, data, cfg)?;
        out.decisions.push(decision);
        pending = Some(out.decisions.len() - 1);
    }
    if !started {
        out.diagnostics
            .push("no tradable date: scorer never produced scores".into());
    }
    out.final_state = state;
    Ok(out)
}

fn record_close(out: &mut BacktestResult, state: &PortfolioState) {
    out.equity.push(EquityPoint {
        date: state.date,
        equity: state.equity,
        cash: state.cash,
        long_value: state.long_value(),
        short_value: state.short_value(),
        gross_leverage: state.gross_leverage,
        holdings: state.holdings(),
    });
    for (j, s, m) in state.positions() {
        out.positions.push(PositionRecord {
            date: state.date,
            symbol: state.symbols[j].clone(),
            shares: s,
            price: m,
            value: s as f64 * m,
        });
    }
}

/// Equal-weighted close-to-close return of yesterday's universe.
fn benchmark_return(data: &Prepared, t: usize) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let close = &data.bars.close;
    let (mut sum, mut count) = (0.0, 0usize);
    for &j in data.universe.members(t - 1) {
        let (a, b) = (close.get(t - 1, j), close.get(t, j));
        if a > 0.0 && b > 0.0 {
            sum += b / a - 1.0;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn decide(
    state: &PortfolioState,
    scored: ScoredUniverse,
    t: usize,
    data: &Prepared,
    cfg: &BacktestConfig,
) -> Result<Decision> {
    let (n_long, n_short) = leg_sizes(scored.symbols.len(), cfg.n_long, cfg.n_short);
    let positions = select_positions(&scored.scores, n_long, n_short)?;
    let longs: Vec<usize> = positions.long.iter().map(|&i| scored.symbols[i]).collect();
    let shorts: Vec<usize> = positions.short.iter().map(|&i| scored.symbols[i]).collect();
    let targets = book(&longs, &shorts, state.equity, |j| data.bars.close.get(t, j));
    let orders = order_list(state, &targets);
    let symbols = data.bars.symbols();
    Ok(Decision {
        t,
        conviction: ConvictionVector {
            date: data.bars.dates()[t],
            symbols: scored.symbols.iter().map(|&j| symbols[j].clone()).collect(),
            scores: scored.scores,
        },
        positions,
        targets,
        orders,
        selected: scored.selected,
        feature_scores: scored.feature_scores,
        training_rows: scored.training_rows,
    })
}

/// Target minus current shares over the union of both books.
fn order_list(state: &PortfolioState, targets: &[(usize, i64)]) -> Vec<(usize, i64)> {
    let mut want = vec![0i64; state.shares.len()];
    for &(j, s) in targets {
        want[j] = s;
    }
    want.iter()
        .zip(&state.shares)
        .enumerate()
        .filter(|(_, (w, h))| w != h)
        .map(|(j, (w, h))| (j, w - h))
        .collect()
}

fn execute(
    state: &mut PortfolioState,
    decision: &Decision,
    decided_equity: f64,
    t: usize,
    data: &Prepared,
    cfg: &BacktestConfig,
) -> Result<(Vec<Fill>, RebalanceMark)> {
    let date = data.bars.dates()[t];
    let open = &data.bars.open;
    let fillable = |j: usize| open.get(t, j) > 0.0;

    // Names that cannot trade today drop out; the rest of each leg is resized.
    let mut targets = decision.targets.clone();
    let skipped_targets = targets.iter().filter(|(j, _)| !fillable(*j)).count();
    if skipped_targets > 0 {
        let longs: Vec<usize> = targets
            .iter()
            .filter(|(j, s)| *s >= 0 && fillable(*j))
            .map(|p| p.0)
            .collect();
        let shorts: Vec<usize> = targets
            .iter()
            .filter(|(j, s)| *s < 0 && fillable(*j))
            .map(|p| p.0)
            .collect();
        let close = &data.bars.close;
        targets = book(&longs, &shorts, decided_equity, |j| close.get(decision.t, j));
    }
    let orders = order_list(state, &targets);
    let mut skipped = skipped_targets;
    let mut fills = Vec::with_capacity(orders.len());
    for (j, qty) in orders {
        if !fillable(j) {
            // Held names without a price simply stay on the book.
            skipped += 1;
            continue;
        }
        let side = if qty > 0 { 1.0 } else { -1.0 };
        let price = open.get(t, j) * (1.0 + side * cfg.slippage);
        let commission = qty.unsigned_abs() as f64 * cfg.commission_per_share;
        state.cash -= qty as f64 * price + commission;
        state.shares[j] += qty;
        fills.push(Fill {
            date,
            symbol: state.symbols[j].clone(),
            shares: qty,
            price,
            commission,
        });
    }
    if skipped > 0 {
        log::debug!("{date}: {skipped} orders skipped for lack of an open price");
    }
    state.mark(date, (0..state.symbols.len()).map(|j| open.get(t, j)));
    if state.equity <= 0.0 {
        return Err(Error::Degenerate(format!(
            "bankrupt on {date}: equity {}",
            state.equity
        )));
    }
    let (mut n_long, mut n_short) = (0, 0);
    for s in &state.shares {
        if *s > 0 {
            n_long += 1;
        } else if *s < 0 {
            n_short += 1;
        }
    }
    Ok((
        fills,
        RebalanceMark {
            decided: data.bars.dates()[decision.t],
            filled: date,
            equity: state.equity,
            gross_leverage: state.gross_leverage,
            holdings: state.holdings(),
            n_long,
            n_short,
            fully_filled: skipped == 0,
        },
    ))
}
