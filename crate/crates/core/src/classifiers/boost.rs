//! AdaBoost over weighted decision stumps, one-vs-rest.

use serde::{Deserialize, Serialize};

use super::{encode_classes, ModelParams, Rows};
use crate::dataset::Class;
use crate::error::{Error, Result};

/// Error floor for a perfect stump; its weight becomes ½ ln(1e10 − 1).
pub const MIN_ERROR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_rounds: usize,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        AdaBoostParams { n_rounds: 50 }
    }
}

/// `polarity` if `x[feature] > threshold`, else `-polarity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: f64,
}

impl Stump {
    pub fn predict(&self, row: &[f64]) -> f64 {
        if row[self.feature] > self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedStump {
    pub stump: Stump,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// One stump sequence per class.
    pub per_class: Vec<Vec<WeightedStump>>,
    /// Weighted training error of each accepted round, per class.
    pub errors: Vec<Vec<f64>>,
}

impl BoostedModel {
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.per_class
            .iter()
            .map(|seq| seq.iter().map(|s| s.weight * s.stump.predict(row)).sum())
            .collect()
    }
}

/// `½ ln(1/ε − 1)` with ε floored at [`MIN_ERROR`].
pub fn stump_weight(eps: f64) -> f64 {
    let e = eps.max(MIN_ERROR);
    0.5 * (1.0 / e - 1.0).ln()
}

/// Per-feature sample order, computed once per fit.
pub(crate) fn presort(x: &Rows<'_>) -> Vec<Vec<usize>> {
    (0..x.width())
        .map(|f| {
            let mut v: Vec<usize> = (0..x.len()).collect();
            v.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
            v
        })
        .collect()
}

/// Stump with the least weighted error under `d`, with that error.
/// Ties go to the earlier feature, the lower threshold, then polarity +1.
pub fn fit_stump(x: &Rows<'_>, signs: &[f64], d: &[f64]) -> Option<(Stump, f64)> {
    fit_stump_sorted(x, &presort(x), signs, d)
}

fn fit_stump_sorted(x: &Rows<'_>, order: &[Vec<usize>], signs: &[f64], d: &[f64]) -> Option<(Stump, f64)> {
    let pos_total: f64 = signs.iter().zip(d).filter(|(s, _)| **s > 0.0).map(|(_, w)| w).sum();
    let neg_total: f64 = d.iter().sum::<f64>() - pos_total;
    let mut best: Option<(Stump, f64)> = None;
    for (f, idx) in order.iter().enumerate() {
        // Weight of positives / negatives at or below the threshold.
        let (mut pos_left, mut neg_left) = (0.0, 0.0);
        for p in 0..idx.len().saturating_sub(1) {
            let i = idx[p];
            if signs[i] > 0.0 {
                pos_left += d[i];
            } else {
                neg_left += d[i];
            }
            let (a, b) = (x.get(i, f), x.get(idx[p + 1], f));
            if !(b > a) {
                continue;
            }
            let mut thr = a + (b - a) / 2.0;
            if !(thr < b) {
                thr = a;
            }
            // Polarity +1 predicts -1 on the left, so left positives and
            // right negatives are errors.
            let err_pos = pos_left + (neg_total - neg_left);
            let err_neg = neg_left + (pos_total - pos_left);
            for (pol, err) in [(1.0, err_pos), (-1.0, err_neg)] {
                if best.is_none_or(|(_, e)| err < e) {
                    best = Some((
                        Stump {
                            feature: f,
                            threshold: thr,
                            polarity: pol,
                        },
                        err,
                    ));
                }
            }
        }
    }
    best
}

/// `D ← D·exp(−w·y·h)`, renormalised to sum 1.
pub fn reweight(d: &mut [f64], signs: &[f64], preds: &[f64], w: f64) {
    for ((di, s), h) in d.iter_mut().zip(signs).zip(preds) {
        *di *= (-w * s * h).exp();
    }
    let z: f64 = d.iter().sum();
    d.iter_mut().for_each(|v| *v /= z);
}

/// Boosts one ±1 problem. Stops early on a perfect stump (after adding it)
/// or when no stump beats chance.
pub fn boost_binary(x: &Rows<'_>, signs: &[f64], n_rounds: usize) -> (Vec<WeightedStump>, Vec<f64>) {
    boost_sorted(x, &presort(x), signs, n_rounds)
}

fn boost_sorted(x: &Rows<'_>, order: &[Vec<usize>], signs: &[f64], n_rounds: usize) -> (Vec<WeightedStump>, Vec<f64>) {
    let n = signs.len();
    let mut d = vec![1.0 / n as f64; n];
    let mut seq = Vec::new();
    let mut errors = Vec::new();
    let mut preds = vec![0.0; n];
    for round in 0..n_rounds {
        let Some((stump, eps)) = fit_stump_sorted(x, order, signs, &d) else {
            log::debug!("round {round}: no admissible stump");
            break;
        };
        if eps >= 0.5 {
            log::debug!("round {round}: stump error {eps} is no better than chance");
            break;
        }
        let w = stump_weight(eps);
        seq.push(WeightedStump { stump, weight: w });
        errors.push(eps);
        if eps < MIN_ERROR {
            break;
        }
        for (i, p) in preds.iter_mut().enumerate() {
            *p = stump.predict(x.row(i));
        }
        reweight(&mut d, signs, &preds, w);
    }
    (seq, errors)
}

pub(crate) fn fit_adaboost(x: &Rows<'_>, y: &[Class], p: &AdaBoostParams) -> Result<(ModelParams, usize, bool)> {
    if p.n_rounds == 0 {
        return Err(Error::invalid("adaboost needs n_rounds >= 1"));
    }
    let (classes, idx) = encode_classes(y);
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes.len()));
    }
    let order = presort(x);
    let mut model = BoostedModel {
        per_class: Vec::new(),
        errors: Vec::new(),
    };
    let mut rounds = 0;
    for c in 0..classes.len() {
        let signs: Vec<f64> = idx.iter().map(|&i| if i == c { 1.0 } else { -1.0 }).collect();
        let (seq, errs) = boost_sorted(x, &order, &signs, p.n_rounds);
        rounds = rounds.max(seq.len());
        model.per_class.push(seq);
        model.errors.push(errs);
    }
    Ok((ModelParams::AdaBoost(model), rounds, true))
}
