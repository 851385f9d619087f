//! Out-of-sample accuracy of single algorithms and ensembles on one
//! labelled window split chronologically.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::backtest::Prepared;
use crate::classifiers::{ClassifierConfig, Rows};
use crate::dataset::{build_training_window, Class, TrainingWindow, WindowOptions};
use crate::ensemble::{select_positions, top_and_bottom_accuracy, EnsembleSpec};
use crate::error::{Error, Result};
use crate::selection::{anova_f_scores, select_k_best};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    /// Sessions, ending at the last date, whose labelled rows are split.
    pub window: usize,
    /// Fraction of the window's dates (the latest ones) held out.
    pub test_frac: f64,
    /// Training dates this close to the first test date are dropped, since
    /// their labels are realised inside the test span.
    pub purge: usize,
    /// Features kept by ANOVA selection on the training part.
    pub k_features: usize,
    /// Per test date, this fraction of names is taken from each end of
    /// the conviction ranking.
    pub extremes_frac: f64,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            window: 250,
            test_frac: 0.2,
            purge: 5,
            k_features: 15,
            extremes_frac: 1.0 / 6.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub name: String,
    /// `algorithm` or `ensemble`.
    pub kind: String,
    pub overall_accuracy: f64,
    /// Ensembles only: accuracy on the names each test date's ranking
    /// puts at the top and bottom.
    pub top_bottom_accuracy: Option<f64>,
    pub top_bottom_count: usize,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// The labelled rows of the `window` sessions ending at the last date.
pub fn latest_window(data: &Prepared, window: usize, opts: &WindowOptions) -> Result<TrainingWindow> {
    let n = data.bars.dates().len();
    if n == 0 {
        return Err(Error::Empty("bars".into()));
    }
    build_training_window(
        &data.factors,
        &data.labels,
        Some(&data.universe),
        n - 1,
        window.min(n),
        opts,
    )
}

/// Training and test parts of a window, split by date.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: TrainingWindow,
    pub test: TrainingWindow,
}

fn subset(w: &TrainingWindow, rows: &[usize]) -> TrainingWindow {
    TrainingWindow {
        asof: w.asof,
        feature_names: w.feature_names.clone(),
        x: rows.iter().flat_map(|&i| w.row(i).iter().copied()).collect(),
        y: rows.iter().map(|&i| w.y[i]).collect(),
        row_dates: rows.iter().map(|&i| w.row_dates[i]).collect(),
        row_symbols: rows.iter().map(|&i| w.row_symbols[i].clone()).collect(),
        dropped_columns: w.dropped_columns.clone(),
    }
}

/// The last `test_frac` of distinct dates form the test part; the `purge`
/// dates before it are discarded.
pub fn chronological_split(w: &TrainingWindow, test_frac: f64, purge: usize) -> Result<Split> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::invalid("test fraction must lie in (0, 1)"));
    }
    let mut dates = w.row_dates.clone();
    dates.sort_unstable();
    dates.dedup();
    let n_test = ((dates.len() as f64) * test_frac).round().max(1.0) as usize;
    if n_test + purge >= dates.len() {
        return Err(Error::InsufficientHistory(format!(
            "{} dates cannot hold {n_test} test dates plus a purge of {purge}",
            dates.len()
        )));
    }
    let first_test = dates[dates.len() - n_test];
    let last_train = dates[dates.len() - n_test - purge - 1];
    let train: Vec<usize> = (0..w.n_rows()).filter(|&i| w.row_dates[i] <= last_train).collect();
    let test: Vec<usize> = (0..w.n_rows()).filter(|&i| w.row_dates[i] >= first_test).collect();
    Ok(Split {
        train: subset(w, &train),
        test: subset(w, &test),
    })
}

fn accuracy(pred: &[Class], truth: &[Class]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Fits each algorithm and each ensemble on the training part (after
/// ANOVA selection there) and scores the test part.
pub fn compare(
    window: &TrainingWindow,
    algorithms: &[&str],
    ensembles: &[(String, EnsembleSpec)],
    cfg: &CompareConfig,
) -> Result<Vec<AccuracyRow>> {
    if algorithms.is_empty() && ensembles.is_empty() {
        return Err(Error::invalid("nothing to compare"));
    }
    let configs = algorithms
        .iter()
        .map(|t| ClassifierConfig::from_tag(t))
        .collect::<Result<Vec<_>>>()?;
    let split = chronological_split(window, cfg.test_frac, cfg.purge)?;
    let scores = anova_f_scores(&split.train)?;
    let selected = select_k_best(&scores, cfg.k_features.min(split.train.n_features()))?;
    let train = split.train.select_columns(&selected)?;
    let test = split.test.select_columns(&selected)?;
    let width = selected.len();
    let xtr = Rows::new(&train.x, width)?;
    let xte = Rows::new(&test.x, width)?;
    let mut rows = Vec::new();

    for (m, (tag, c)) in algorithms.iter().zip(&configs).enumerate() {
        let (model, _) = c
            .clone()
            .with_seed(cfg.seed.wrapping_add(m as u64))
            .fit(&xtr, &train.y)?;
        let pred = model.predict(&xte)?;
        log::info!("{tag}: test accuracy {:.4}", accuracy(&pred, &test.y));
        rows.push(AccuracyRow {
            name: tag.to_string(),
            kind: "algorithm".into(),
            overall_accuracy: accuracy(&pred, &test.y),
            top_bottom_accuracy: None,
            top_bottom_count: 0,
            train_rows: train.n_rows(),
            test_rows: test.n_rows(),
        });
    }

    for (name, spec) in ensembles {
        let mut spec = spec.clone();
        spec.k_features = width;
        let fitted = spec.fit(&split.train, cfg.seed)?;
        let test = split.test.select_columns(&fitted.selected)?;
        let xte = Rows::new(&test.x, fitted.selected.len())?;
        let conviction = fitted.score(&xte)?;
        let pred = ensemble_classes(&fitted.member_predictions(&xte)?, &spec.weights);
        // Extremes are taken per test date, as a trader would.
        let (mut hits, mut total) = (0.0, 0usize);
        let mut start = 0;
        while start < test.n_rows() {
            let date = test.row_dates[start];
            let end = (start..test.n_rows())
                .find(|&i| test.row_dates[i] != date)
                .unwrap_or(test.n_rows());
            let n_ext = ((end - start) as f64 * cfg.extremes_frac).round() as usize;
            if n_ext > 0 {
                let pos = select_positions(&conviction[start..end], n_ext, n_ext)?;
                let realized: Vec<Option<Class>> = test.y[start..end].iter().map(|c| Some(*c)).collect();
                if let Some(a) = top_and_bottom_accuracy(&pos, &realized) {
                    let n = pos.long.len() + pos.short.len();
                    hits += a * n as f64;
                    total += n;
                }
            }
            start = end;
        }
        rows.push(AccuracyRow {
            name: name.clone(),
            kind: "ensemble".into(),
            overall_accuracy: accuracy(&pred, &test.y),
            top_bottom_accuracy: (total > 0).then(|| hits / total as f64),
            top_bottom_count: total,
            train_rows: train.n_rows(),
            test_rows: test.n_rows(),
        });
    }
    Ok(rows)
}

/// Class with the largest total member weight per row; ties go to the
/// class nearest zero, then the lower one.
fn ensemble_classes(members: &[Vec<Class>], weights: &[f64]) -> Vec<Class> {
    let n = members.first().map_or(0, |m| m.len());
    (0..n)
        .map(|i| {
            let mut tally: Vec<(Class, f64)> = Vec::new();
            for (m, w) in members.iter().zip(weights) {
                match tally.iter_mut().find(|(c, _)| *c == m[i]) {
                    Some(e) => e.1 += w,
                    None => tally.push((m[i], *w)),
                }
            }
            tally.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then(a.0.unsigned_abs().cmp(&b.0.unsigned_abs()))
                    .then(a.0.cmp(&b.0))
            });
            tally[0].0
        })
        .collect()
}

pub const ACCURACY_HEADER: [&str; 7] = [
    "name",
    "kind",
    "overall_accuracy",
    "top_bottom_accuracy",
    "top_bottom_count",
    "train_rows",
    "test_rows",
];

pub fn write_accuracy_csv<W: Write>(rows: &[AccuracyRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ACCURACY_HEADER)?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.kind.clone(),
            r.overall_accuracy.to_string(),
            r.top_bottom_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            r.top_bottom_count.to_string(),
            r.train_rows.to_string(),
            r.test_rows.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<accuracy writer>", e))?;
    Ok(())
}
