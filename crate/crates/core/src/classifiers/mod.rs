//! Classifiers over {-1, 0, +1} labels behind one fit/predict contract.
//!
//! Every algorithm is configured by a [`ClassifierConfig`], fitted into an
//! immutable [`TrainedModel`] and reports a [`FitReport`]. Margin-based
//! models handle more than two classes one-vs-rest.

pub mod boost;
pub mod linear;
pub mod naive_bayes;
pub mod tree;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Class;
use crate::error::{Error, Result};

pub use boost::AdaBoostParams;
pub use linear::{LinearModel, LogisticParams, Penalty, SgdParams, SvmParams};
pub use naive_bayes::{BernoulliNbParams, GaussianNbParams};
pub use tree::{ForestParams, TreeParams};

/// Borrowed row-major feature matrix.
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a> {
    data: &'a [f64],
    width: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f64], width: usize) -> Result<Self> {
        if width == 0 {
            if !data.is_empty() {
                return Err(Error::Malformed("zero-width matrix with data".into()));
            }
        } else if !data.len().is_multiple_of(width) {
            return Err(Error::Malformed(format!(
                "{} values do not form rows of width {width}",
                data.len()
            )));
        }
        Ok(Rows { data, width })
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.data[i * self.width + c]
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        let w = self.width.max(1);
        self.data.chunks_exact(w)
    }
}

/// Sorted distinct classes of `y` and each sample's index into them.
pub(crate) fn encode_classes(y: &[Class]) -> (Vec<Class>, Vec<usize>) {
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let idx = y
        .iter()
        .map(|c| classes.binary_search(c).expect("class present"))
        .collect();
    (classes, idx)
}

fn check_training(x: &Rows<'_>, y: &[Class]) -> Result<()> {
    if x.width() == 0 {
        return Err(Error::Empty("feature columns".into()));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("training rows".into()));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Malformed("non-finite training feature".into()));
    }
    Ok(())
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in v.iter().enumerate() {
        if *s > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Algorithm tag plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum ClassifierConfig {
    GaussianNb(GaussianNbParams),
    BernoulliNb(BernoulliNbParams),
    Logistic(LogisticParams),
    Sgd(SgdParams),
    LinearSvm(SvmParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    AdaBoost(AdaBoostParams),
}

/// Tags accepted by [`ClassifierConfig::from_tag`].
pub const ALGORITHM_TAGS: [&str; 10] = [
    "gaussian_nb",
    "bernoulli_nb",
    "logistic",
    "logistic_l1",
    "logistic_l2",
    "sgd",
    "linear_svm",
    "decision_tree",
    "random_forest",
    "adaboost",
];

impl ClassifierConfig {
    /// Default configuration for a tag. `logistic` is the L2 variant.
    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "gaussian_nb" => ClassifierConfig::GaussianNb(Default::default()),
            "bernoulli_nb" => ClassifierConfig::BernoulliNb(Default::default()),
            "logistic" | "logistic_l2" => ClassifierConfig::Logistic(LogisticParams::default()),
            "logistic_l1" => ClassifierConfig::Logistic(LogisticParams {
                penalty: Penalty::L1,
                ..Default::default()
            }),
            "sgd" => ClassifierConfig::Sgd(Default::default()),
            "linear_svm" => ClassifierConfig::LinearSvm(Default::default()),
            "decision_tree" => ClassifierConfig::DecisionTree(Default::default()),
            "random_forest" => ClassifierConfig::RandomForest(Default::default()),
            "adaboost" => ClassifierConfig::AdaBoost(Default::default()),
            other => {
                return Err(Error::UnknownAlgorithm {
                    tag: other.to_string(),
                    valid: ALGORITHM_TAGS.join(", "),
                })
            }
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ClassifierConfig::GaussianNb(_) => "gaussian_nb",
            ClassifierConfig::BernoulliNb(_) => "bernoulli_nb",
            ClassifierConfig::Logistic(p) => match p.penalty {
                Penalty::L1 => "logistic_l1",
                Penalty::L2 => "logistic_l2",
            },
            ClassifierConfig::Sgd(_) => "sgd",
            ClassifierConfig::LinearSvm(_) => "linear_svm",
            ClassifierConfig::DecisionTree(_) => "decision_tree",
            ClassifierConfig::RandomForest(_) => "random_forest",
            ClassifierConfig::AdaBoost(_) => "adaboost",
        }
    }

    /// Replaces the seed of stochastic algorithms.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ClassifierConfig::Sgd(p) => p.seed = seed,
            ClassifierConfig::RandomForest(p) => p.seed = seed,
            _ => {}
        }
        self
    }

    pub fn fit(&self, x: &Rows<'_>, y: &[Class]) -> Result<(TrainedModel, FitReport)> {
        self.fit_from(x, y, None)
    }

    /// Fits with an optional starting point. Only iterative linear models
    /// use it (when its shape matches); everything else ignores it.
    pub fn fit_from(
        &self,
        x: &Rows<'_>,
        y: &[Class],
        init: Option<&TrainedModel>,
    ) -> Result<(TrainedModel, FitReport)> {
        check_training(x, y)?;
        let start = Instant::now();
        let (params, iterations, converged) = match self {
            ClassifierConfig::GaussianNb(p) => (naive_bayes::fit_gaussian(x, y, p)?, 1, true),
            ClassifierConfig::BernoulliNb(p) => (naive_bayes::fit_bernoulli(x, y, p)?, 1, true),
            ClassifierConfig::Logistic(p) => {
                let start = init.and_then(|m| match &m.params {
                    ModelParams::Linear(l) if m.classes == encode_classes(y).0 => Some(l),
                    _ => None,
                });
                linear::fit_logistic_from(x, y, p, start)?
            }
            ClassifierConfig::Sgd(p) => linear::fit_sgd(x, y, p)?,
            ClassifierConfig::LinearSvm(p) => linear::fit_svm(x, y, p)?,
            ClassifierConfig::DecisionTree(p) => (tree::fit_tree(x, y, p)?, 1, true),
            ClassifierConfig::RandomForest(p) => {
                let (m, n) = tree::fit_forest(x, y, p)?;
                (m, n, true)
            }
            ClassifierConfig::AdaBoost(p) => boost::fit_adaboost(x, y, p)?,
        };
        let (classes, _) = encode_classes(y);
        let model = TrainedModel {
            algorithm: self.tag().to_string(),
            classes,
            n_features: x.width(),
            params,
        };
        let pred = model.predict(x)?;
        let correct = pred.iter().zip(y).filter(|(a, b)| a == b).count();
        let report = FitReport {
            training_accuracy: correct as f64 / y.len() as f64,
            iterations,
            converged,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        Ok((model, report))
    }
}

/// Outcome of one fit. `wall_time_ms` is informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub training_accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

/// Fitted parameters per algorithm family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    GaussianNb(naive_bayes::GaussianNbModel),
    BernoulliNb(naive_bayes::BernoulliNbModel),
    Linear(linear::LinearModel),
    Tree(tree::Tree),
    Forest(tree::Forest),
    AdaBoost(boost::BoostedModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub algorithm: String,
    pub classes: Vec<Class>,
    pub n_features: usize,
    pub params: ModelParams,
}

pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    model: TrainedModel,
}

impl TrainedModel {
    fn check_width(&self, x: &Rows<'_>) -> Result<()> {
        if x.width() != self.n_features && !x.is_empty() {
            return Err(Error::WidthMismatch {
                expected: self.n_features,
                found: x.width(),
            });
        }
        Ok(())
    }

    /// Algorithm-native score per class for one row: posteriors for naive
    /// Bayes, margins for linear models, leaf distribution or vote fractions
    /// for trees, boosted sums for AdaBoost.
    pub fn class_scores(&self, row: &[f64]) -> Vec<f64> {
        match &self.params {
            ModelParams::GaussianNb(m) => m.posterior(row),
            ModelParams::BernoulliNb(m) => m.posterior(row),
            ModelParams::Linear(m) => m.margins(row),
            ModelParams::Tree(t) => t.leaf(row).distribution.clone(),
            ModelParams::Forest(f) => f.vote_fractions(row, self.classes.len()),
            ModelParams::AdaBoost(b) => b.scores(row),
        }
    }

    fn predict_row(&self, row: &[f64]) -> usize {
        match &self.params {
            ModelParams::Tree(t) => t.leaf(row).class,
            _ => argmax(&self.class_scores(row)),
        }
    }

    /// Class probabilities: native where the model has them, otherwise a
    /// softmax of the native scores.
    pub fn probabilities(&self, row: &[f64]) -> Vec<f64> {
        let s = self.class_scores(row);
        match &self.params {
            ModelParams::GaussianNb(_)
            | ModelParams::BernoulliNb(_)
            | ModelParams::Tree(_)
            | ModelParams::Forest(_) => s,
            ModelParams::Linear(_) | ModelParams::AdaBoost(_) => softmax(&s),
        }
    }

    /// Probability-weighted class value, in [min class, max class].
    pub fn expected_class(&self, row: &[f64]) -> f64 {
        self.probabilities(row)
            .iter()
            .zip(&self.classes)
            .map(|(p, c)| p * *c as f64)
            .sum()
    }

    pub fn predict(&self, x: &Rows<'_>) -> Result<Vec<Class>> {
        self.check_width(x)?;
        Ok(x.iter().map(|r| self.classes[self.predict_row(r)]).collect())
    }

    /// Native score of the predicted class for each row.
    pub fn predict_score(&self, x: &Rows<'_>) -> Result<Vec<f64>> {
        self.check_width(x)?;
        Ok(x.iter().map(|r| self.class_scores(r)[self.predict_row(r)]).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument {
            version: MODEL_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let version = v.get("version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if version != MODEL_VERSION {
            return Err(Error::ModelVersion(version));
        }
        let doc: ModelDocument = serde_json::from_value(v)?;
        Ok(doc.model)
    }
}

/// Convenience: default configuration for `tag`, fitted on `x`, `y`.
pub fn fit_tag(tag: &str, x: &Rows<'_>, y: &[Class]) -> Result<(TrainedModel, FitReport)> {
    ClassifierConfig::from_tag(tag)?.fit(x, y)
}
