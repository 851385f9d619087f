//! Entropy decision trees and bagged random forests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, encode_classes, ModelParams, Rows};
use crate::dataset::Class;
use crate::error::{Error, Result};

/// Shannon entropy in bits of a (possibly unnormalised) weight vector.
pub fn entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| {
            let p = w / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Parent entropy minus the weighted entropy of the children.
pub fn information_gain(parent: &[f64], left: &[f64], right: &[f64]) -> f64 {
    let (wl, wr): (f64, f64) = (left.iter().sum(), right.iter().sum());
    let w = wl + wr;
    entropy(parent) - (wl / w) * entropy(left) - (wr / w) * entropy(right)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Splits are allowed while depth < max_depth (a stump has depth 1).
    pub max_depth: usize,
    /// Minimum sample weight on each side of a split.
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// Index into the model's class list.
    pub class: usize,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, row: &[f64]) -> &Leaf {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(l) => return l,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

/// Midpoint of `a < b`, or `a` when rounding would put it at `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

struct Builder<'a> {
    x: Rows<'a>,
    cls: &'a [usize],
    weight: &'a [f64],
    n_classes: usize,
    class_totals: Vec<f64>,
    max_depth: usize,
    min_leaf: f64,
    mtry: usize,
}

impl Builder<'_> {
    fn leaf(&self, counts: &[f64]) -> Node {
        let total: f64 = counts.iter().sum();
        let mut best = 0;
        for c in 1..self.n_classes {
            let better = counts[c] > counts[best]
                || (counts[c] == counts[best] && self.class_totals[c] > self.class_totals[best]);
            if better {
                best = c;
            }
        }
        Node::Leaf(Leaf {
            class: best,
            distribution: counts.iter().map(|c| c / total).collect(),
        })
    }

    /// Best split of one feature's sorted segment as (gain, threshold,
    /// left size). Earlier positions win ties within 1e-12.
    fn scan_weighted(&self, seg: &[(f64, u32)], counts: &[f64], parent_h: f64) -> Option<(f64, f64, usize)> {
        let xlogx = |v: f64| if v > 0.0 { v * v.log2() } else { 0.0 };
        let total: f64 = counts.iter().sum();
        let mut left = vec![0.0; counts.len()];
        let mut right = counts.to_vec();
        // Σ c·log2(c) over each side's class weights.
        let (mut sl, mut sr) = (0.0, counts.iter().map(|c| xlogx(*c)).sum::<f64>());
        let mut wl = 0.0;
        let mut best: Option<(f64, f64, usize)> = None;
        for p in 0..seg.len() - 1 {
            let i = seg[p].1 as usize;
            let (w, c) = (self.weight[i], self.cls[i]);
            sl += xlogx(left[c] + w) - xlogx(left[c]);
            sr += xlogx(right[c] - w) - xlogx(right[c]);
            left[c] += w;
            right[c] -= w;
            wl += w;
            let (a, b) = (seg[p].0, seg[p + 1].0);
            let wr = total - wl;
            if !(b > a) || wl < self.min_leaf || wr < self.min_leaf {
                continue;
            }
            // (w/total)·H(side) = (w·log2 w − Σ c·log2 c) / total
            let gain = parent_h - (xlogx(wl) - sl + xlogx(wr) - sr) / total;
            if gain > 1e-12 && best.is_none_or(|bst| gain > bst.0 + 1e-12) {
                best = Some((gain, midpoint(a, b), p + 1));
            }
        }
        best
    }

    /// [`Self::scan_weighted`] for integral weights, with `table[v] = v·log2 v`.
    fn scan_integral(
        &self,
        seg: &[(f64, u32)],
        weight: &[usize],
        counts: &[f64],
        table: &[f64],
        parent_h: f64,
    ) -> Option<(f64, f64, usize)> {
        let counts: Vec<usize> = counts.iter().map(|c| *c as usize).collect();
        let total: usize = counts.iter().sum();
        let total_f = total as f64;
        let min_leaf = self.min_leaf.ceil() as usize;
        let mut left = vec![0usize; counts.len()];
        let mut right = counts.clone();
        let (mut sl, mut sr) = (0.0, counts.iter().map(|c| table[*c]).sum::<f64>());
        let mut wl = 0usize;
        let mut best: Option<(f64, f64, usize)> = None;
        for p in 0..seg.len() - 1 {
            let i = seg[p].1 as usize;
            let (w, c) = (weight[i], self.cls[i]);
            sl += table[left[c] + w] - table[left[c]];
            sr += table[right[c] - w] - table[right[c]];
            left[c] += w;
            right[c] -= w;
            wl += w;
            let (a, b) = (seg[p].0, seg[p + 1].0);
            let wr = total - wl;
            if !(b > a) || wl < min_leaf || wr < min_leaf {
                continue;
            }
            let gain = parent_h - (table[wl] - sl + table[wr] - sr) / total_f;
            if gain > 1e-12 && best.is_none_or(|bst| gain > bst.0 + 1e-12) {
                best = Some((gain, midpoint(a, b), p + 1));
            }
        }
        best
    }

    fn build(&self, rng: Option<&mut ChaCha8Rng>) -> Tree {
        let k = self.x.width();
        let members: Vec<u32> = (0..self.cls.len() as u32)
            .filter(|&i| self.weight[i as usize] > 0.0)
            .collect();
        // Per feature: (value, row) pairs in ascending order, kept sorted
        // within each node's segment as nodes are split.
        let mut sorted: Vec<Vec<(f64, u32)>> = (0..k)
            .map(|f| {
                let mut v: Vec<(f64, u32)> = members.iter().map(|&i| (self.x.get(i as usize, f), i)).collect();
                v.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                v
            })
            .collect();
        // w·log2(w) for every integral weight up to the node total; bagged
        // and unweighted trees only ever see integral sums.
        let integral = members.iter().all(|&i| self.weight[i as usize].fract() == 0.0);
        let grand: f64 = members.iter().map(|&i| self.weight[i as usize]).sum();
        let table: Option<Vec<f64>> = (integral && grand < 1e7).then(|| {
            (0..=grand as usize)
                .map(|v| if v == 0 { 0.0 } else { v as f64 * (v as f64).log2() })
                .collect()
        });
        let int_weight: Vec<usize> = match table {
            Some(_) => self.weight.iter().map(|w| *w as usize).collect(),
            None => Vec::new(),
        };
        let mut rng = rng;
        let mut goes_left = vec![false; self.cls.len()];
        let mut scratch: Vec<(f64, u32)> = Vec::with_capacity(members.len());
        let mut nodes: Vec<Node> = vec![Node::Leaf(Leaf {
            class: 0,
            distribution: vec![],
        })];
        let mut stack = vec![(0usize, 0usize, members.len(), 0usize)];
        let mut counts = vec![0.0; self.n_classes];

        while let Some((id, lo, hi, depth)) = stack.pop() {
            counts.iter_mut().for_each(|c| *c = 0.0);
            for &(_, i) in &sorted[0][lo..hi] {
                counts[self.cls[i as usize]] += self.weight[i as usize];
            }
            let total: f64 = counts.iter().sum();
            let pure = counts.iter().filter(|c| **c > 0.0).count() <= 1;
            if depth >= self.max_depth || pure || total < 2.0 * self.min_leaf {
                nodes[id] = self.leaf(&counts);
                continue;
            }
            let parent_h = entropy(&counts);
            let features: Vec<usize> = match rng.as_deref_mut() {
                Some(r) if self.mtry < k => {
                    let mut f = rand::seq::index::sample(r, k, self.mtry).into_vec();
                    f.sort_unstable();
                    f
                }
                _ => (0..k).collect(),
            };
            // (gain, feature, threshold, left size)
            let mut best: Option<(f64, usize, f64, usize)> = None;
            for &f in &features {
                let seg = &sorted[f][lo..hi];
                let cand = match &table {
                    Some(t) => self.scan_integral(seg, &int_weight, &counts, t, parent_h),
                    None => self.scan_weighted(seg, &counts, parent_h),
                };
                if let Some((gain, thr, n_left)) = cand {
                    if best.is_none_or(|bst| gain > bst.0 + 1e-12) {
                        best = Some((gain, f, thr, n_left));
                    }
                }
            }
            let Some((gain, f, thr, n_left)) = best else {
                nodes[id] = self.leaf(&counts);
                continue;
            };
            for &(_, i) in &sorted[f][lo..hi] {
                goes_left[i as usize] = false;
            }
            for &(_, i) in &sorted[f][lo..lo + n_left] {
                goes_left[i as usize] = true;
            }
            for list in sorted.iter_mut() {
                scratch.clear();
                scratch.extend(list[lo..hi].iter().filter(|e| !goes_left[e.1 as usize]));
                let mut w = lo;
                for r in lo..hi {
                    let e = list[r];
                    if goes_left[e.1 as usize] {
                        list[w] = e;
                        w += 1;
                    }
                }
                list[w..hi].copy_from_slice(&scratch);
            }
            let (l_id, r_id) = (nodes.len(), nodes.len() + 1);
            let placeholder = Node::Leaf(Leaf {
                class: 0,
                distribution: vec![],
            });
            nodes.push(placeholder.clone());
            nodes.push(placeholder);
            nodes[id] = Node::Split {
                feature: f,
                threshold: thr,
                gain,
                left: l_id,
                right: r_id,
            };
            stack.push((r_id, lo + n_left, hi, depth + 1));
            stack.push((l_id, lo, lo + n_left, depth + 1));
        }
        Tree { nodes }
    }
}

fn check_tree_params(max_depth: usize, min_leaf: usize) -> Result<()> {
    if max_depth == 0 || min_leaf == 0 {
        return Err(Error::invalid("tree needs max_depth >= 1 and min_leaf >= 1"));
    }
    Ok(())
}

pub(crate) fn fit_tree(x: &Rows<'_>, y: &[Class], p: &TreeParams) -> Result<ModelParams> {
    check_tree_params(p.max_depth, p.min_leaf)?;
    let (classes, cls) = encode_classes(y);
    let weight = vec![1.0; y.len()];
    let mut class_totals = vec![0.0; classes.len()];
    for &c in &cls {
        class_totals[c] += 1.0;
    }
    let b = Builder {
        x: *x,
        cls: &cls,
        weight: &weight,
        n_classes: classes.len(),
        class_totals,
        max_depth: p.max_depth,
        min_leaf: p.min_leaf as f64,
        mtry: x.width(),
    };
    Ok(ModelParams::Tree(b.build(None)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn per node; `None` means ⌈√k⌉.
    pub features_per_split: Option<usize>,
    pub seed: u64,
    /// Disabling bootstrap trains every tree on the full sample.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 5,
            features_per_split: None,
            seed: 0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub seed: u64,
    pub bootstrap: bool,
    pub n_samples: usize,
    pub oob_error: Option<f64>,
}

impl Forest {
    pub fn vote_fractions(&self, row: &[f64], n_classes: usize) -> Vec<f64> {
        let mut votes = vec![0.0; n_classes];
        for t in &self.trees {
            votes[t.leaf(row).class] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn bootstrap_counts(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1.0;
    }
    counts
}

/// Misclassification rate of each sample under the trees whose bootstrap
/// left it out. Samples that were in every bootstrap are skipped.
fn oob_rate(trees: &[Tree], in_bag: &[Vec<f64>], x: &Rows<'_>, cls: &[usize], n_classes: usize) -> Option<f64> {
    let (mut wrong, mut scored) = (0usize, 0usize);
    let mut votes = vec![0.0; n_classes];
    for i in 0..x.len() {
        votes.iter_mut().for_each(|v| *v = 0.0);
        let mut any = false;
        for (t, bag) in trees.iter().zip(in_bag) {
            if bag[i] == 0.0 {
                votes[t.leaf(x.row(i)).class] += 1.0;
                any = true;
            }
        }
        if any {
            scored += 1;
            if argmax(&votes) != cls[i] {
                wrong += 1;
            }
        }
    }
    if scored < x.len() {
        log::debug!("{} samples had no out-of-bag trees", x.len() - scored);
    }
    (scored > 0).then(|| wrong as f64 / scored as f64)
}

pub(crate) fn fit_forest(x: &Rows<'_>, y: &[Class], p: &ForestParams) -> Result<(ModelParams, usize)> {
    check_tree_params(p.max_depth, p.min_leaf)?;
    if p.n_trees == 0 || p.features_per_split == Some(0) {
        return Err(Error::invalid("forest needs n_trees >= 1 and features_per_split >= 1"));
    }
    let (classes, cls) = encode_classes(y);
    let (n, k) = (x.len(), x.width());
    let mtry = p
        .features_per_split
        .unwrap_or_else(|| (k as f64).sqrt().ceil() as usize)
        .min(k);
    let mut trees = Vec::with_capacity(p.n_trees);
    let mut bags = Vec::with_capacity(p.n_trees);
    for t in 0..p.n_trees {
        let mut rng = tree_rng(p.seed, t);
        let weight = if p.bootstrap {
            bootstrap_counts(&mut rng, n)
        } else {
            vec![1.0; n]
        };
        let mut class_totals = vec![0.0; classes.len()];
        for (c, w) in cls.iter().zip(&weight) {
            class_totals[*c] += w;
        }
        let b = Builder {
            x: *x,
            cls: &cls,
            weight: &weight,
            n_classes: classes.len(),
            class_totals,
            max_depth: p.max_depth,
            min_leaf: p.min_leaf as f64,
            mtry,
        };
        trees.push(b.build(Some(&mut rng)));
        bags.push(weight);
    }
    let oob_error = if p.bootstrap {
        oob_rate(&trees, &bags, x, &cls, classes.len())
    } else {
        None
    };
    Ok((
        ModelParams::Forest(Forest {
            trees,
            seed: p.seed,
            bootstrap: p.bootstrap,
            n_samples: n,
            oob_error,
        }),
        p.n_trees,
    ))
}

/// Out-of-bag error of a fitted forest on its own training data, replaying
/// the bootstrap draws from the stored seed.
pub fn oob_error(model: &super::TrainedModel, x: &Rows<'_>, y: &[Class]) -> Result<Option<f64>> {
    let ModelParams::Forest(f) = &model.params else {
        return Err(Error::invalid("out-of-bag error needs a random forest"));
    };
    if !f.bootstrap {
        return Ok(None);
    }
    if x.len() != f.n_samples || y.len() != f.n_samples {
        return Err(Error::LengthMismatch {
            expected: f.n_samples,
            found: x.len(),
        });
    }
    let cls: Vec<usize> = y
        .iter()
        .map(|c| {
            model
                .classes
                .binary_search(c)
                .map_err(|_| Error::invalid(format!("class {c} not seen in training")))
        })
        .collect::<Result<_>>()?;
    let bags: Vec<Vec<f64>> = (0..f.trees.len())
        .map(|t| bootstrap_counts(&mut tree_rng(f.seed, t), f.n_samples))
        .collect();
    Ok(oob_rate(&f.trees, &bags, x, &cls, model.classes.len()))
}

#[cfg(test)]
mod tests {
    use super::super::{ClassifierConfig, Rows};
    use super::*;

    #[test]
    fn entropy_values() {
        assert!((entropy(&[5.0, 5.0]) - 1.0).abs() < 1e-15);
        assert_eq!(entropy(&[4.0, 0.0]), 0.0);
    }

    #[test]
    fn perfect_splitter_recovers_parent_entropy() {
        let parent = [3.0, 3.0];
        assert!((information_gain(&parent, &[3.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pure_node_does_not_split() {
        let cfg = ClassifierConfig::DecisionTree(TreeParams {
            max_depth: 5,
            min_leaf: 1,
        });
        let (m, _) = cfg.fit(&Rows::new(&[1.0, 2.0, 3.0], 1).unwrap(), &[1, 1, 1]).unwrap();
        let ModelParams::Tree(t) = &m.params else { panic!() };
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn xor_needs_depth_two() {
        // Quadrant XOR with unequal quadrant counts so the root split has
        // positive gain.
        let pts = [
            (0.0, 0.0, 0),
            (0.1, 0.1, 0),
            (0.2, 0.2, 0),
            (0.1, 0.9, 1),
            (0.8, 0.0, 1),
            (0.9, 0.1, 1),
            (1.0, 0.2, 1),
            (0.9, 0.9, 0),
        ];
        let x: Vec<f64> = pts.iter().flat_map(|p| [p.0, p.1]).collect();
        let y: Vec<Class> = pts.iter().map(|p| p.2).collect();
        let cfg = ClassifierConfig::DecisionTree(TreeParams {
            max_depth: 2,
            min_leaf: 1,
        });
        let (m, r) = cfg.fit(&Rows::new(&x, 2).unwrap(), &y).unwrap();
        assert_eq!(r.training_accuracy, 1.0);
        let ModelParams::Tree(t) = &m.params else { panic!() };
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 0.5));
    }

    #[test]
    fn leaf_tie_prefers_larger_class_then_lower_value() {
        // The left leaf holds one sample of each class; class 1 has more
        // training mass overall.
        let x = [0.0, 0.0, 1.0, 1.0, 1.0];
        let y = [0, 1, 1, 1, 1];
        let cfg = ClassifierConfig::DecisionTree(TreeParams {
            max_depth: 1,
            min_leaf: 1,
        });
        let (m, _) = cfg.fit(&Rows::new(&x, 1).unwrap(), &y).unwrap();
        assert_eq!(m.predict(&Rows::new(&[0.0], 1).unwrap()).unwrap(), vec![1]);
    }
}
