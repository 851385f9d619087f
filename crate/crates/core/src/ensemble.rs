//! Weighted vote of several classifiers and long/short selection.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierConfig, FitReport, LinearModel, ModelParams, Rows, TrainedModel};
use crate::dataset::{Class, TrainingWindow};
use crate::error::{Error, Result};
use crate::selection::{anova_f_scores, select_k_best, FeatureScore};

/// How member outputs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    /// Weighted mean of hard class predictions.
    #[default]
    Hard,
    /// Weighted mean of each member's probability-weighted class value.
    Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: Vec<ClassifierConfig>,
    pub weights: Vec<f64>,
    /// Features kept by ANOVA selection before fitting.
    pub k_features: usize,
    #[serde(default)]
    pub mode: VoteMode,
}

pub const PRESETS: [&str; 2] = ["best", "ensemble1"];

impl EnsembleSpec {
    /// Equal-weighted ensemble of the given algorithm tags.
    pub fn from_tags(tags: &[&str]) -> Result<Self> {
        if tags.is_empty() {
            return Err(Error::invalid("an ensemble needs at least one member"));
        }
        let members = tags
            .iter()
            .map(|t| ClassifierConfig::from_tag(t))
            .collect::<Result<Vec<_>>>()?;
        let w = 1.0 / members.len() as f64;
        Ok(EnsembleSpec {
            weights: vec![w; members.len()],
            members,
            k_features: 15,
            mode: VoteMode::Hard,
        })
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "best" => Self::from_tags(&["gaussian_nb", "logistic_l1", "decision_tree", "sgd"]),
            "ensemble1" => Self::from_tags(&["logistic", "gaussian_nb", "bernoulli_nb", "sgd"]),
            other => Err(Error::invalid(format!(
                "unknown ensemble preset `{other}`; valid presets: {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::invalid("an ensemble needs at least one member"));
        }
        if self.weights.len() != self.members.len() {
            return Err(Error::LengthMismatch {
                expected: self.members.len(),
                found: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("ensemble weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("ensemble weights sum to {total}, not 1")));
        }
        if self.k_features == 0 {
            return Err(Error::invalid("k_features must be at least 1"));
        }
        Ok(())
    }

    pub fn tags(&self) -> Vec<&'static str> {
        self.members.iter().map(|m| m.tag()).collect()
    }

    /// Selects features on `window`, then fits every member on them.
    /// Member `m` receives seed `seed + m`.
    pub fn fit(&self, window: &TrainingWindow, seed: u64) -> Result<FittedEnsemble> {
        self.fit_warm(window, seed, None)
    }

    /// As [`Self::fit`], but iterative members start from `previous`'s
    /// solution, carried over by feature name (new features start at 0).
    pub fn fit_warm(
        &self,
        window: &TrainingWindow,
        seed: u64,
        previous: Option<&FittedEnsemble>,
    ) -> Result<FittedEnsemble> {
        self.validate()?;
        let scores = anova_f_scores(window)?;
        let selected = select_k_best(&scores, self.k_features)?;
        let sub = window.select_columns(&selected)?;
        let x = Rows::new(&sub.x, sub.n_features())?;
        let mut models = Vec::with_capacity(self.members.len());
        let mut reports = Vec::with_capacity(self.members.len());
        for (m, cfg) in self.members.iter().enumerate() {
            let init = previous
                .filter(|p| p.spec.members.get(m) == Some(cfg))
                .and_then(|p| remap_linear(&p.models[m], &p.selected, &selected));
            let (model, report) = cfg
                .clone()
                .with_seed(seed.wrapping_add(m as u64))
                .fit_from(&x, &sub.y, init.as_ref())
                .map_err(|e| Error::MemberFit {
                    member: cfg.tag().to_string(),
                    source: Box::new(e),
                })?;
            models.push(model);
            reports.push(report);
        }
        Ok(FittedEnsemble {
            spec: self.clone(),
            feature_scores: scores,
            selected,
            models,
            reports,
        })
    }
}

/// A linear model re-expressed over `to` columns, or `None` for other families.
fn remap_linear(model: &TrainedModel, from: &[String], to: &[String]) -> Option<TrainedModel> {
    let ModelParams::Linear(lin) = &model.params else {
        return None;
    };
    let pos: Vec<Option<usize>> = to.iter().map(|n| from.iter().position(|f| f == n)).collect();
    let weights = lin
        .weights
        .iter()
        .map(|w| pos.iter().map(|p| p.map_or(0.0, |i| w[i])).collect())
        .collect();
    Some(TrainedModel {
        n_features: to.len(),
        params: ModelParams::Linear(LinearModel {
            weights,
            intercepts: lin.intercepts.clone(),
        }),
        ..model.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedEnsemble {
    pub spec: EnsembleSpec,
    pub feature_scores: Vec<FeatureScore>,
    /// Columns every member was trained on, in registry order.
    pub selected: Vec<String>,
    pub models: Vec<TrainedModel>,
    pub reports: Vec<FitReport>,
}

impl FittedEnsemble {
    /// Conviction in [-1, 1] per row of `x` (columns = `selected`).
    pub fn score(&self, x: &Rows<'_>) -> Result<Vec<f64>> {
        if x.width() != self.selected.len() && !x.is_empty() {
            return Err(Error::WidthMismatch {
                expected: self.selected.len(),
                found: x.width(),
            });
        }
        let mut out = vec![0.0; x.len()];
        for (model, w) in self.models.iter().zip(&self.spec.weights) {
            match self.spec.mode {
                VoteMode::Hard => {
                    for (o, c) in out.iter_mut().zip(model.predict(x)?) {
                        *o += w * c as f64;
                    }
                }
                VoteMode::Score => {
                    for (o, row) in out.iter_mut().zip(x.iter()) {
                        *o += w * model.expected_class(row);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Hard predictions of every member, one vector per member.
    pub fn member_predictions(&self, x: &Rows<'_>) -> Result<Vec<Vec<Class>>> {
        self.models.iter().map(|m| m.predict(x)).collect()
    }
}

/// Scores for the symbols of one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvictionVector {
    pub date: NaiveDate,
    pub symbols: Vec<String>,
    pub scores: Vec<f64>,
}

/// Indices into a score vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Positions {
    pub long: Vec<usize>,
    pub short: Vec<usize>,
}

impl Positions {
    pub fn side(&self, i: usize) -> &'static str {
        if self.long.contains(&i) {
            "long"
        } else if self.short.contains(&i) {
            "short"
        } else {
            "none"
        }
    }
}

/// Ranks ascending by (score, index): the first `n_short` go short, the
/// last `n_long` go long. An index falling in both sets goes to neither.
pub fn select_positions(scores: &[f64], n_long: usize, n_short: usize) -> Result<Positions> {
    if scores.is_empty() {
        return Err(Error::Empty("conviction scores".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Malformed("NaN conviction score".into()));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let short_end = n_short.min(n);
    let long_start = n - n_long.min(n);
    let mut short: Vec<usize> = order[..short_end].to_vec();
    let mut long: Vec<usize> = order[long_start..].iter().rev().cloned().collect();
    if long_start < short_end {
        log::warn!(
            "{} symbols qualified for both legs and were left out",
            short_end - long_start
        );
        let both: Vec<usize> = order[long_start..short_end].to_vec();
        short.retain(|i| !both.contains(i));
        long.retain(|i| !both.contains(i));
    }
    Ok(Positions { long, short })
}

/// Fraction of selected names whose realised label matches their side
/// (+1 for longs, -1 for shorts). Names without a label are ignored.
pub fn top_and_bottom_accuracy(positions: &Positions, realized: &[Option<Class>]) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (set, want) in [(&positions.long, 1), (&positions.short, -1)] {
        for &i in set {
            if let Some(Some(label)) = realized.get(i) {
                total += 1;
                if *label == want {
                    hits += 1;
                }
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

pub const CONVICTION_HEADER: [&str; 4] = ["date", "symbol", "score", "position"];

/// Appends `date,symbol,score,position` rows.
pub fn write_conviction<W: Write>(
    w: &mut csv::Writer<W>,
    conviction: &ConvictionVector,
    positions: &Positions,
) -> Result<()> {
    let date = conviction.date.to_string();
    for (i, (sym, s)) in conviction.symbols.iter().zip(&conviction.scores).enumerate() {
        w.write_record([date.as_str(), sym, &s.to_string(), positions.side(i)])?;
    }
    Ok(())
}
