//! Linear one-vs-rest models: logistic regression, SGD hinge and linear SVM.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{encode_classes, ModelParams, Rows};
use crate::dataset::Class;
use crate::error::{Error, Result};

/// One weight vector and intercept per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl LinearModel {
    fn zeros(n_classes: usize, k: usize) -> Self {
        LinearModel {
            weights: vec![vec![0.0; k]; n_classes],
            intercepts: vec![0.0; n_classes],
        }
    }

    pub fn margins(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| dot(w, row) + b)
            .collect()
    }
}

/// Dot product with eight running sums so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0f64; 8];
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

fn require_two_classes(y: &[Class]) -> Result<(Vec<Class>, Vec<usize>)> {
    let (classes, idx) = encode_classes(y);
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes.len()));
    }
    Ok((classes, idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub penalty: Penalty,
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            penalty: Penalty::L2,
            lambda: 1e-3,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Largest eigenvalue of `[X 1]ᵀ[X 1] / n` by power iteration on the
/// (k+1)-square Gram matrix.
fn gram_spectral_bound(x: &Rows<'_>) -> f64 {
    let k = x.width() + 1;
    let n = x.len() as f64;
    let mut g = vec![0.0; k * k];
    let mut aug = vec![1.0; k];
    for row in x.iter() {
        aug[..k - 1].copy_from_slice(row);
        for a in 0..k {
            let xa = aug[a];
            for b in a..k {
                g[a * k + b] += xa * aug[b];
            }
        }
    }
    for a in 0..k {
        for b in a..k {
            g[a * k + b] /= n;
            g[b * k + a] = g[a * k + b];
        }
    }
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..k).map(|a| dot(&g[a * k..(a + 1) * k], &v)).collect();
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = dot(&w, &v);
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    let trace: f64 = (0..k).map(|a| g[a * k + a]).sum();
    (lambda * 1.02).min(trace)
}

/// One-vs-rest logistic regression by accelerated proximal gradient on
/// `mean NLL + lambda·‖w‖₁` or `mean NLL + lambda·‖w‖²`. Intercepts are
/// not penalised. Starts from `init` when its shape matches (same class
/// count and width), otherwise from zero.
pub(crate) fn fit_logistic_from(
    x: &Rows<'_>,
    y: &[Class],
    p: &LogisticParams,
    init: Option<&LinearModel>,
) -> Result<(ModelParams, usize, bool)> {
    if !(p.lambda >= 0.0) || !(p.tol > 0.0) || p.max_iter == 0 {
        return Err(Error::invalid("logistic needs lambda >= 0, tol > 0, max_iter >= 1"));
    }
    let (classes, idx) = require_two_classes(y)?;
    let (n, k, nc) = (x.len(), x.width(), classes.len());
    let lipschitz = 0.25 * gram_spectral_bound(x);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut cols = vec![0.0; n * k];
    for (i, row) in x.iter().enumerate() {
        for (f, v) in row.iter().enumerate() {
            cols[f * n + i] = *v;
        }
    }
    let init = init.filter(|m| m.weights.len() == nc && m.weights.iter().all(|w| w.len() == k));

    // The binary problems are independent; they share passes over the
    // columns only to keep each column in cache.
    let mut probs: Vec<Fista> = (0..nc)
        .map(|c| {
            let mut theta = vec![0.0; k + 1];
            if let Some(m) = init {
                theta[..k].copy_from_slice(&m.weights[c]);
                theta[k] = m.intercepts[c];
            }
            Fista::new(theta)
        })
        .collect();
    let targets: Vec<Vec<f64>> = (0..nc)
        .map(|c| idx.iter().map(|ci| if *ci == c { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut z = vec![vec![0.0; n]; nc];
    let mut grad = vec![vec![0.0; k + 1]; nc];
    let inv_n = 1.0 / n as f64;
    let mut iterations = 0;
    for it in 1..=p.max_iter {
        let active: Vec<usize> = (0..nc).filter(|&c| !probs[c].done).collect();
        if active.is_empty() {
            break;
        }
        iterations = it;
        for &c in &active {
            let b = probs[c].ext[k];
            z[c].iter_mut().for_each(|v| *v = b);
        }
        for f in 0..k {
            let col = &cols[f * n..(f + 1) * n];
            for &c in &active {
                let w = probs[c].ext[f];
                if w != 0.0 {
                    for (zi, xi) in z[c].iter_mut().zip(col) {
                        *zi += w * xi;
                    }
                }
            }
        }
        for &c in &active {
            for (zi, t) in z[c].iter_mut().zip(&targets[c]) {
                *zi = (sigmoid(*zi) - t) * inv_n;
            }
            grad[c][k] = z[c].iter().sum();
        }
        for f in 0..k {
            let col = &cols[f * n..(f + 1) * n];
            for &c in &active {
                grad[c][f] = dot(col, &z[c]);
            }
        }
        for &c in &active {
            probs[c].step(&grad[c], step, p);
        }
    }
    let converged = probs.iter().all(|f| f.done);

    let mut model = LinearModel::zeros(nc, k);
    for (c, prob) in probs.iter().enumerate() {
        model.weights[c].copy_from_slice(&prob.theta[..k]);
        model.intercepts[c] = prob.theta[k];
    }
    Ok((ModelParams::Linear(model), iterations, converged))
}

/// FISTA state for one binary problem; the last entry of each vector is
/// the intercept.
struct Fista {
    theta: Vec<f64>,
    ext: Vec<f64>,
    next: Vec<f64>,
    momentum: f64,
    done: bool,
}

impl Fista {
    fn new(theta: Vec<f64>) -> Self {
        Fista {
            ext: theta.clone(),
            next: theta.clone(),
            theta,
            momentum: 1.0,
            done: false,
        }
    }

    /// Proximal step from the extrapolated point, then momentum with
    /// adaptive restart. Marks the problem done once no parameter moves
    /// by `tol` or more.
    fn step(&mut self, grad: &[f64], step: f64, p: &LogisticParams) {
        let k = self.theta.len() - 1;
        for (j, (nx, (e, g))) in self.next.iter_mut().zip(self.ext.iter().zip(grad)).enumerate() {
            let v = e - step * g;
            *nx = if j == k {
                v
            } else {
                match p.penalty {
                    Penalty::L1 => {
                        let s = step * p.lambda;
                        v.signum() * (v.abs() - s).max(0.0)
                    }
                    Penalty::L2 => v / (1.0 + 2.0 * step * p.lambda),
                }
            };
        }
        let mut delta = 0.0f64;
        let mut restart = 0.0;
        for j in 0..=k {
            let d = self.next[j] - self.theta[j];
            delta = delta.max(d.abs());
            restart += (self.ext[j] - self.next[j]) * d;
        }
        if restart > 0.0 {
            self.momentum = 1.0;
        }
        let m_next = (1.0 + (1.0 + 4.0 * self.momentum * self.momentum).sqrt()) / 2.0;
        let beta = (self.momentum - 1.0) / m_next;
        for j in 0..=k {
            self.ext[j] = self.next[j] + beta * (self.next[j] - self.theta[j]);
        }
        self.momentum = m_next;
        std::mem::swap(&mut self.theta, &mut self.next);
        self.done = delta < p.tol;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub epochs: usize,
    /// Initial learning rate γ₀ in γ_t = γ₀ / (1 + γ₀·alpha·t).
    pub eta0: f64,
    pub seed: u64,
}

impl Default for SgdParams {
    fn default() -> Self {
        SgdParams {
            alpha: 1e-4,
            l1_ratio: 0.15,
            epochs: 5,
            eta0: 0.01,
            seed: 0,
        }
    }
}

/// One stochastic update of the hinge loss with elastic-net penalty.
/// `sign` is +1 for the positive class. The L1 part is applied as a
/// soft-threshold after the gradient step.
pub(crate) fn sgd_step(w: &mut [f64], b: &mut f64, row: &[f64], sign: f64, gamma: f64, alpha: f64, l1_ratio: f64) {
    let margin = sign * (dot(w, row) + *b);
    let shrink = 1.0 - gamma * alpha * (1.0 - l1_ratio);
    let l1 = gamma * alpha * l1_ratio;
    let active = margin < 1.0;
    for (wj, xj) in w.iter_mut().zip(row) {
        let mut v = *wj * shrink;
        if active {
            v += gamma * sign * xj;
        }
        *wj = if l1 > 0.0 {
            v.signum() * (v.abs() - l1).max(0.0)
        } else {
            v
        };
    }
    if active {
        *b += gamma * sign;
    }
}

pub(crate) fn fit_sgd(x: &Rows<'_>, y: &[Class], p: &SgdParams) -> Result<(ModelParams, usize, bool)> {
    if !(p.alpha >= 0.0) || !(0.0..=1.0).contains(&p.l1_ratio) || !(p.eta0 > 0.0) {
        return Err(Error::invalid("sgd needs alpha >= 0, l1_ratio in [0, 1], eta0 > 0"));
    }
    let (classes, idx) = require_two_classes(y)?;
    let (n, k, nc) = (x.len(), x.width(), classes.len());
    let mut model = LinearModel::zeros(nc, k);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0u64;
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let gamma = p.eta0 / (1.0 + p.eta0 * p.alpha * t as f64);
            let row = x.row(i);
            for c in 0..nc {
                let sign = if idx[i] == c { 1.0 } else { -1.0 };
                sgd_step(
                    &mut model.weights[c],
                    &mut model.intercepts[c],
                    row,
                    sign,
                    gamma,
                    p.alpha,
                    p.l1_ratio,
                );
            }
            t += 1;
        }
    }
    Ok((ModelParams::Linear(model), p.epochs, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Weight of the mean hinge term against ½‖w‖².
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

fn svm_objective(w: &[f64], b: f64, x: &Rows<'_>, signs: &[f64], c: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(signs)
        .map(|(row, s)| (1.0 - s * (dot(w, row) + b)).max(0.0))
        .sum::<f64>()
        / x.len() as f64;
    0.5 * dot(w, w) + c * hinge
}

/// Primal soft-margin SVM, `½‖w‖² + C·mean hinge`, by batch subgradient
/// steps of size `C/t`. Keeps the best iterate seen.
pub(crate) fn fit_svm(x: &Rows<'_>, y: &[Class], p: &SvmParams) -> Result<(ModelParams, usize, bool)> {
    if !(p.c > 0.0) || p.max_iter == 0 {
        return Err(Error::invalid("svm needs C > 0 and max_iter >= 1"));
    }
    let (classes, idx) = require_two_classes(y)?;
    let (n, k, nc) = (x.len(), x.width(), classes.len());
    let lambda = 1.0 / p.c;
    let mut model = LinearModel::zeros(nc, k);
    let mut max_iters = 0;
    let mut all_converged = true;
    for c in 0..nc {
        let signs: Vec<f64> = idx.iter().map(|&i| if i == c { 1.0 } else { -1.0 }).collect();
        let (mut w, mut b) = (vec![0.0; k], 0.0);
        let mut best = (svm_objective(&w, b, x, &signs, p.c), w.clone(), b);
        let mut last_improvement = (0usize, best.0);
        let mut converged = false;
        let mut iters = 0;
        let mut sub = vec![0.0; k];
        for t in 1..=p.max_iter {
            iters = t;
            let eta = 1.0 / (lambda * t as f64);
            sub.iter_mut().for_each(|v| *v = 0.0);
            let mut sub_b = 0.0;
            for (row, s) in x.iter().zip(&signs) {
                if s * (dot(&w, row) + b) < 1.0 {
                    for (g, xj) in sub.iter_mut().zip(row) {
                        *g += s * xj;
                    }
                    sub_b += s;
                }
            }
            let scale = 1.0 - eta * lambda;
            for (wj, g) in w.iter_mut().zip(&sub) {
                *wj = scale * *wj + eta * g / n as f64;
            }
            b += eta * sub_b / n as f64;
            let obj = svm_objective(&w, b, x, &signs, p.c);
            if obj < best.0 {
                best = (obj, w.clone(), b);
            }
            if t - last_improvement.0 >= 50 {
                if last_improvement.1 - best.0 <= p.tol * best.0.abs().max(1.0) {
                    converged = true;
                    break;
                }
                last_improvement = (t, best.0);
            }
        }
        model.weights[c] = best.1;
        model.intercepts[c] = best.2;
        max_iters = max_iters.max(iters);
        all_converged &= converged;
    }
    Ok((ModelParams::Linear(model), max_iters, all_converged))
}
