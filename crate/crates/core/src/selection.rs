//! One-way ANOVA F scores and top-k feature selection.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::{Class, TrainingWindow};
use crate::error::{Error, Result};

/// Score given to a feature that separates the classes perfectly
/// (zero within-class spread, nonzero between-class spread).
pub const PERFECT_SEPARATION_F: f64 = f64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub f: f64,
    /// 1-based, by descending F with ties in column order.
    pub rank: usize,
}

/// F statistic of one feature column against class labels.
pub fn anova_f(values: &[f64], y: &[Class]) -> Result<f64> {
    if values.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: values.len(),
        });
    }
    let mut groups: BTreeMap<Class, (usize, f64)> = BTreeMap::new();
    for (&v, &c) in values.iter().zip(y) {
        let g = groups.entry(c).or_insert((0, 0.0));
        g.0 += 1;
        g.1 += v;
    }
    if groups.len() < 2 {
        return Err(Error::SingleClass(groups.len()));
    }
    if let Some((c, _)) = groups.iter().find(|(_, g)| g.0 < 2) {
        return Err(Error::Degenerate(format!("class {c} has fewer than 2 samples")));
    }
    let n = values.len() as f64;
    let grand = values.iter().sum::<f64>() / n;
    let means: BTreeMap<Class, f64> = groups.iter().map(|(c, g)| (*c, g.1 / g.0 as f64)).collect();
    let ss_between: f64 = groups
        .iter()
        .map(|(c, g)| g.0 as f64 * (means[c] - grand).powi(2))
        .sum();
    let ss_within: f64 = values.iter().zip(y).map(|(v, c)| (v - means[c]).powi(2)).sum();
    let df_between = (groups.len() - 1) as f64;
    let df_within = n - groups.len() as f64;
    let msb = ss_between / df_between;
    let msw = ss_within / df_within;
    // Relative guards keep round-off in the means from posing as signal.
    let scale = values.iter().map(|v| v * v).sum::<f64>() / n;
    let tiny = 1e-24 * scale.max(f64::MIN_POSITIVE);
    if msw <= tiny {
        return Ok(if msb <= tiny { 0.0 } else { PERFECT_SEPARATION_F });
    }
    if msb <= tiny {
        return Ok(0.0);
    }
    Ok(msb / msw)
}

/// Scores every column of the window.
pub fn anova_f_scores(window: &TrainingWindow) -> Result<Vec<FeatureScore>> {
    let k = window.n_features();
    let mut col = vec![0.0; window.n_rows()];
    let mut scores = Vec::with_capacity(k);
    for c in 0..k {
        for (i, v) in col.iter_mut().enumerate() {
            *v = window.x[i * k + c];
        }
        scores.push(FeatureScore {
            feature: window.feature_names[c].clone(),
            f: anova_f(&col, &window.y)?,
            rank: 0,
        });
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| scores[b].f.total_cmp(&scores[a].f).then(a.cmp(&b)));
    for (r, &i) in order.iter().enumerate() {
        scores[i].rank = r + 1;
    }
    Ok(scores)
}

/// The `k` best-ranked features, returned in their original column order.
pub fn select_k_best(scores: &[FeatureScore], k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if scores.is_empty() {
        return Err(Error::Empty("feature scores".into()));
    }
    Ok(scores
        .iter()
        .filter(|s| s.rank <= k)
        .map(|s| s.feature.clone())
        .collect())
}

/// Appends `asof,rank,feature,F` rows, best first.
pub fn write_feature_log<W: Write>(w: &mut csv::Writer<W>, asof: NaiveDate, scores: &[FeatureScore]) -> Result<()> {
    let mut sorted: Vec<&FeatureScore> = scores.iter().collect();
    sorted.sort_by_key(|s| s.rank);
    for s in sorted {
        w.write_record([asof.to_string(), s.rank.to_string(), s.feature.clone(), s.f.to_string()])?;
    }
    Ok(())
}

pub const FEATURE_LOG_HEADER: [&str; 4] = ["asof", "rank", "feature", "F"];
