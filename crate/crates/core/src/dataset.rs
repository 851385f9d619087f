//! Forward returns, quantile labels and walk-forward training windows.

use std::io::Write;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::factors::FactorMatrix;
use crate::market_data::Universe;
use crate::panel::{is_missing, Panel};

/// Class label of one sample.
pub type Class = i8;

/// `(P[t+n] - P[t]) / P[t]`; the last `n` dates are missing.
pub fn forward_returns(close: &Panel, n: usize) -> Result<Panel> {
    if n == 0 {
        return Err(Error::invalid("forward horizon must be at least 1"));
    }
    let mut out = close.missing_like();
    for t in 0..close.n_dates().saturating_sub(n) {
        for j in 0..close.n_symbols() {
            let (p0, p1) = (close.get(t, j), close.get(t + n, j));
            if !is_missing(p0) && !is_missing(p1) && p0 != 0.0 {
                out.set(t, j, (p1 - p0) / p0);
            }
        }
    }
    Ok(out)
}

/// Panel over {-1, 0, +1, missing} and the horizon its returns looked ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPanel {
    pub panel: Panel,
    pub horizon: usize,
}

/// Number of names in a tail of `frac` over `k` defined values.
pub fn tail_count(frac: f64, k: usize) -> usize {
    ((frac * k as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Per date: the top `upper` fraction of defined forward returns is +1, the
/// bottom `lower` fraction -1, the rest 0. Ties go by symbol order. Dates
/// with fewer than 3 defined values are left missing.
pub fn quantile_labels(fwd: &Panel, horizon: usize, upper: f64, lower: f64) -> Result<LabelPanel> {
    if !(0.0..=1.0).contains(&upper) || !(0.0..=1.0).contains(&lower) || upper + lower > 1.0 {
        return Err(Error::invalid(format!(
            "label fractions {upper}/{lower} must be in [0, 1] and sum to at most 1"
        )));
    }
    let mut out = fwd.missing_like();
    for t in 0..fwd.n_dates() {
        let mut idx: Vec<usize> = (0..fwd.n_symbols()).filter(|&j| !is_missing(fwd.get(t, j))).collect();
        let k = idx.len();
        if k < 3 {
            continue;
        }
        idx.sort_by(|&a, &b| fwd.get(t, a).total_cmp(&fwd.get(t, b)).then(a.cmp(&b)));
        let n_low = tail_count(lower, k).min(k);
        let n_high = tail_count(upper, k).min(k - n_low);
        for (rank, &j) in idx.iter().enumerate() {
            let label = if rank < n_low {
                -1.0
            } else if rank >= k - n_high {
                1.0
            } else {
                0.0
            };
            out.set(t, j, label);
        }
    }
    Ok(LabelPanel { panel: out, horizon })
}

/// Convenience: forward returns over `horizon` followed by [`quantile_labels`].
pub fn label_prices(close: &Panel, horizon: usize, upper: f64, lower: f64) -> Result<LabelPanel> {
    quantile_labels(&forward_returns(close, horizon)?, horizon, upper, lower)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WindowOptions {
    /// Drop label-0 rows from training.
    pub exclude_zero: bool,
    /// Columns missing in more than this fraction of candidate rows are dropped.
    pub max_missing_frac: f64,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions {
            exclude_zero: false,
            max_missing_frac: 0.3,
        }
    }
}

/// Dense row-major design matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow {
    pub asof: NaiveDate,
    pub feature_names: Vec<String>,
    /// Row-major, `n_rows × feature_names.len()`.
    pub x: Vec<f64>,
    pub y: Vec<Class>,
    pub row_dates: Vec<NaiveDate>,
    pub row_symbols: Vec<String>,
    pub dropped_columns: Vec<String>,
}

impl TrainingWindow {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.n_features();
        &self.x[i * k..(i + 1) * k]
    }

    /// Keeps only the named columns, in the order given.
    pub fn select_columns(&self, names: &[String]) -> Result<TrainingWindow> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::invalid(format!("no column `{n}` in training window")))
            })
            .collect::<Result<_>>()?;
        let mut x = Vec::with_capacity(self.n_rows() * idx.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            x.extend(idx.iter().map(|&c| row[c]));
        }
        Ok(TrainingWindow {
            feature_names: names.to_vec(),
            x,
            ..self.clone()
        })
    }

    /// `date,symbol,label,<features...>`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string(), "symbol".into(), "label".into()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![
                self.row_dates[i].to_string(),
                self.row_symbols[i].clone(),
                self.y[i].to_string(),
            ];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<window writer>", e))?;
        Ok(())
    }
}

fn in_universe(universe: Option<&Universe>, t: usize, j: usize) -> bool {
    universe.is_none_or(|u| u.contains(t, j))
}

/// Samples from date indices `asof - window + 1 ..= asof - horizon`, i.e.
/// every date in the trailing `window` sessions whose label is already
/// known at `asof`.
pub fn build_training_window(
    factors: &FactorMatrix,
    labels: &LabelPanel,
    universe: Option<&Universe>,
    asof: usize,
    window: usize,
    opts: &WindowOptions,
) -> Result<TrainingWindow> {
    let dates = factors.dates();
    if window == 0 {
        return Err(Error::invalid("training window must be at least 1"));
    }
    if asof >= dates.len() {
        return Err(Error::invalid(format!("as-of index {asof} outside date axis")));
    }
    if !labels.panel.dates().eq(dates) || labels.panel.symbols() != factors.symbols() {
        return Err(Error::Malformed("labels and factors are on different grids".into()));
    }
    if asof + 1 < window || window <= labels.horizon {
        return Err(Error::InsufficientHistory(format!(
            "{} needs {window} sessions of history",
            dates[asof]
        )));
    }
    let first = asof + 1 - window;
    let last = asof - labels.horizon;

    let mut candidates = Vec::new();
    for t in first..=last {
        for j in 0..factors.symbols().len() {
            let y = labels.panel.get(t, j);
            if is_missing(y) || !in_universe(universe, t, j) || (opts.exclude_zero && y == 0.0) {
                continue;
            }
            candidates.push((t, j));
        }
    }
    if candidates.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "no labelled samples before {}",
            dates[asof]
        )));
    }

    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (c, name) in factors.names().iter().enumerate() {
        let p = factors.panel(c);
        let missing = candidates.iter().filter(|&&(t, j)| is_missing(p.get(t, j))).count();
        if missing as f64 > opts.max_missing_frac * candidates.len() as f64 {
            log::debug!(
                "{}: dropping `{name}` ({missing}/{} missing)",
                dates[asof],
                candidates.len()
            );
            dropped.push(name.clone());
        } else {
            keep.push(c);
        }
    }

    let mut x = Vec::with_capacity(candidates.len() * keep.len());
    let (mut y, mut row_dates, mut row_symbols) = (Vec::new(), Vec::new(), Vec::new());
    let mut row = Vec::with_capacity(keep.len());
    for &(t, j) in &candidates {
        row.clear();
        row.extend(keep.iter().map(|&c| factors.panel(c).get(t, j)));
        if row.iter().any(|v| is_missing(*v)) {
            continue;
        }
        x.extend_from_slice(&row);
        y.push(labels.panel.get(t, j) as Class);
        row_dates.push(dates[t]);
        row_symbols.push(factors.symbols()[j].clone());
    }
    if y.is_empty() || keep.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "no complete training rows before {}",
            dates[asof]
        )));
    }
    Ok(TrainingWindow {
        asof: dates[asof],
        feature_names: keep.iter().map(|&c| factors.names()[c].clone()).collect(),
        x,
        y,
        row_dates,
        row_symbols,
        dropped_columns: dropped,
    })
}

/// Feature rows for scoring at date index `t`: universe members whose
/// named features are all defined.
pub fn scoring_rows(
    factors: &FactorMatrix,
    universe: Option<&Universe>,
    t: usize,
    names: &[String],
) -> Result<(Vec<usize>, Vec<f64>)> {
    let cols: Vec<&Panel> = names
        .iter()
        .map(|n| {
            factors
                .get(n)
                .ok_or_else(|| Error::invalid(format!("unknown factor `{n}`")))
        })
        .collect::<Result<_>>()?;
    let mut symbols = Vec::new();
    let mut x = Vec::new();
    for j in 0..factors.symbols().len() {
        if !in_universe(universe, t, j) {
            continue;
        }
        let start = x.len();
        x.extend(cols.iter().map(|p| p.get(t, j)));
        if x[start..].iter().any(|v| is_missing(*v)) {
            x.truncate(start);
        } else {
            symbols.push(j);
        }
    }
    Ok((symbols, x))
}
