//! Gaussian and Bernoulli naive Bayes.

use serde::{Deserialize, Serialize};

use super::{encode_classes, softmax, ModelParams, Rows};
use crate::dataset::Class;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbParams {
    /// Added to every variance, as a fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl Default for GaussianNbParams {
    fn default() -> Self {
        GaussianNbParams { var_smoothing: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

/// Per-group means and population variances of every column, summed in
/// row order. `group[i]` indexes into `n_groups`.
fn grouped_moments(x: &Rows<'_>, group: &[usize], n_groups: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let k = x.width();
    let mut count = vec![0.0; n_groups];
    let mut mean = vec![vec![0.0; k]; n_groups];
    for (row, &g) in x.iter().zip(group) {
        count[g] += 1.0;
        for (m, v) in mean[g].iter_mut().zip(row) {
            *m += v;
        }
    }
    for (m, c) in mean.iter_mut().zip(&count) {
        m.iter_mut().for_each(|v| *v /= c);
    }
    let mut var = vec![vec![0.0; k]; n_groups];
    for (row, &g) in x.iter().zip(group) {
        for ((s, v), m) in var[g].iter_mut().zip(row).zip(&mean[g]) {
            *s += (v - m) * (v - m);
        }
    }
    for (s, c) in var.iter_mut().zip(&count) {
        s.iter_mut().for_each(|v| *v /= c);
    }
    (count, mean, var)
}

pub(crate) fn fit_gaussian(x: &Rows<'_>, y: &[Class], p: &GaussianNbParams) -> Result<ModelParams> {
    let (classes, idx) = encode_classes(y);
    let n = y.len();
    let (_, _, pooled) = grouped_moments(x, &vec![0; n], 1);
    let max_var = pooled[0].iter().copied().fold(0.0, f64::max);
    let eps = if max_var > 0.0 {
        p.var_smoothing * max_var
    } else {
        p.var_smoothing
    };
    let (count, means, mut variances) = grouped_moments(x, &idx, classes.len());
    for v in variances.iter_mut().flatten() {
        *v += eps;
    }
    Ok(ModelParams::GaussianNb(GaussianNbModel {
        priors: count.iter().map(|c| c / n as f64).collect(),
        means,
        variances,
    }))
}

impl GaussianNbModel {
    /// Log prior plus the summed log Gaussian densities, per class.
    pub fn joint_log_likelihood(&self, row: &[f64]) -> Vec<f64> {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.priors
            .iter()
            .enumerate()
            .map(|(c, prior)| {
                let ll: f64 = row
                    .iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((x, m), v)| -0.5 * (ln_2pi + v.ln() + (x - m) * (x - m) / v))
                    .sum();
                prior.ln() + ll
            })
            .collect()
    }

    pub fn posterior(&self, row: &[f64]) -> Vec<f64> {
        softmax(&self.joint_log_likelihood(row))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliNbParams {
    /// Values strictly above this become 1.
    pub threshold: f64,
    /// Additive smoothing count (1 = Laplace).
    pub alpha: f64,
}

impl Default for BernoulliNbParams {
    fn default() -> Self {
        BernoulliNbParams {
            threshold: 0.0,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliNbModel {
    pub threshold: f64,
    pub priors: Vec<f64>,
    /// P(feature = 1 | class).
    pub rates: Vec<Vec<f64>>,
}

pub(crate) fn fit_bernoulli(x: &Rows<'_>, y: &[Class], p: &BernoulliNbParams) -> Result<ModelParams> {
    if !(p.alpha > 0.0) {
        return Err(crate::error::Error::invalid("Bernoulli smoothing must be positive"));
    }
    let (classes, idx) = encode_classes(y);
    let k = x.width();
    let mut counts = vec![0usize; classes.len()];
    let mut ones = vec![vec![0usize; k]; classes.len()];
    for (i, row) in x.iter().enumerate() {
        counts[idx[i]] += 1;
        for (c, v) in row.iter().enumerate() {
            if *v > p.threshold {
                ones[idx[i]][c] += 1;
            }
        }
    }
    let n = y.len() as f64;
    Ok(ModelParams::BernoulliNb(BernoulliNbModel {
        threshold: p.threshold,
        priors: counts.iter().map(|c| *c as f64 / n).collect(),
        rates: ones
            .iter()
            .zip(&counts)
            .map(|(o, nc)| {
                o.iter()
                    .map(|c| (*c as f64 + p.alpha) / (*nc as f64 + 2.0 * p.alpha))
                    .collect()
            })
            .collect(),
    }))
}

impl BernoulliNbModel {
    pub fn joint_log_likelihood(&self, row: &[f64]) -> Vec<f64> {
        self.priors
            .iter()
            .zip(&self.rates)
            .map(|(prior, rates)| {
                prior.ln()
                    + row
                        .iter()
                        .zip(rates)
                        .map(|(x, r)| if *x > self.threshold { r.ln() } else { (1.0 - r).ln() })
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn posterior(&self, row: &[f64]) -> Vec<f64> {
        softmax(&self.joint_log_likelihood(row))
    }
}
