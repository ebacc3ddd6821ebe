//! Random forest of Gini decision trees.
//!
//! Tree `t` of a forest trained with master seed `s` draws all of its
//! randomness (bootstrap resample, feature subsets) from
//! `rng::stream(s, [TREE, t])`, and trees are stored in index order, so the
//! trained model does not depend on how many threads built it.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ProbabilisticClassifier;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` means `round(sqrt(D))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().round() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Vec<f64>),
}

/// A tree stored as a flat node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf(freq) => return freq,
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let TreeNode::Split { left, right, .. } = self.nodes[i] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }

    fn validate(&self, n_features: usize, n_classes: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::arg("tree has no nodes"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                TreeNode::Split {
                    feature, left, right, threshold,
                } => {
                    if *feature >= n_features || *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() || !threshold.is_finite() {
                        return Err(Error::arg(format!("malformed split node {i}")));
                    }
                }
                TreeNode::Leaf(freq) => {
                    let sum: f64 = freq.iter().sum();
                    if freq.len() != n_classes || (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::arg(format!("malformed leaf node {i}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub(crate) trees: Vec<DecisionTree>,
    pub(crate) n_features: usize,
    pub(crate) n_classes: usize,
    pub(crate) params: ForestParams,
    pub(crate) seed: u64,
}

impl RandomForest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::arg("forest has no trees"));
        }
        self.trees.iter().try_for_each(|t| t.validate(self.n_features, self.n_classes))
    }
}

impl ProbabilisticClassifier for RandomForest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        super::check_dim(x, self.n_features)?;
        let mut acc = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (a, f) in acc.iter_mut().zip(tree.leaf_for(x)) {
                *a += f;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

/// Row-major training matrix with labels.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub x: &'a [f64],
    pub y: &'a [usize],
    pub n_features: usize,
    pub n_classes: usize,
}

impl<'a> TrainingSet<'a> {
    pub fn new(x: &'a [f64], y: &'a [usize], n_features: usize, n_classes: usize) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::arg("training set is empty"));
        }
        if n_features == 0 || x.len() != y.len() * n_features {
            return Err(Error::arg(format!(
                "feature matrix has {} values, expected {} rows x {n_features}",
                x.len(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
            return Err(Error::arg(format!("label {bad} out of range for {n_classes} classes")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("training features must be finite"));
        }
        Ok(Self { x, y, n_features, n_classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.n_features + feature]
    }

    pub(crate) fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.n_classes];
        self.y.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    }
}

/// Row indices tree `tree_index` is trained on.
pub fn bootstrap_sample(seed: u64, tree_index: usize, n_rows: usize, bootstrap: bool) -> Vec<usize> {
    let mut rng = rng::stream(seed, &[domain::TREE, tree_index as u64]);
    sample_rows(&mut rng, n_rows, bootstrap)
}

fn sample_rows(rng: &mut ChaCha8Rng, n_rows: usize, bootstrap: bool) -> Vec<usize> {
    if bootstrap {
        (0..n_rows).map(|_| rng.random_range(0..n_rows)).collect()
    } else {
        (0..n_rows).collect()
    }
}

pub fn train_forest(data: TrainingSet<'_>, params: &ForestParams, seed: u64) -> Result<RandomForest> {
    if params.n_trees == 0 {
        return Err(Error::arg("forest needs at least one tree"));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::arg("min_samples_leaf must be at least 1"));
    }
    if data.distinct_labels() < 2 {
        return Err(Error::Training(
            "training data contains a single class; the model would be degenerate".into(),
        ));
    }
    let trees = par::map_range(params.n_trees, |t| {
        let mut rng = rng::stream(seed, &[domain::TREE, t as u64]);
        let rows = sample_rows(&mut rng, data.len(), params.bootstrap);
        TreeBuilder::new(data, params, rng).build(rows)
    });
    Ok(RandomForest {
        trees,
        n_features: data.n_features,
        n_classes: data.n_classes,
        params: params.clone(),
        seed,
    })
}

struct TreeBuilder<'a> {
    data: TrainingSet<'a>,
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    feature_order: Vec<usize>,
    scratch: Vec<(f64, usize)>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<'a> TreeBuilder<'a> {
    fn new(data: TrainingSet<'a>, params: &ForestParams, rng: ChaCha8Rng) -> Self {
        Self {
            data,
            max_depth: params.max_depth.unwrap_or(usize::MAX),
            min_leaf: params.min_samples_leaf,
            mtry: params.resolved_features_per_split(data.n_features),
            rng,
            nodes: Vec::new(),
            feature_order: (0..data.n_features).collect(),
            scratch: Vec::new(),
        }
    }

    fn build(mut self, mut rows: Vec<usize>) -> DecisionTree {
        // (node slot, start, end, depth) over `rows`
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
        self.nodes.push(TreeNode::Leaf(Vec::new()));
        while let Some((slot, start, end, depth)) = stack.pop() {
            let counts = self.class_counts(&rows[start..end]);
            let n = end - start;
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if pure || depth >= self.max_depth || n < 2 * self.min_leaf {
                None
            } else {
                self.best_split(&rows[start..end], &counts)
            };
            match split {
                None => {
                    self.nodes[slot] = TreeNode::Leaf(counts.iter().map(|&c| c as f64 / n as f64).collect());
                }
                Some(c) => {
                    let mid = start + partition(&mut rows[start..end], |r| self.data.value(r, c.feature) <= c.threshold);
                    let left = self.nodes.len();
                    let right = left + 1;
                    self.nodes.push(TreeNode::Leaf(Vec::new()));
                    self.nodes.push(TreeNode::Leaf(Vec::new()));
                    self.nodes[slot] = TreeNode::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                    };
                    stack.push((right, mid, end, depth + 1));
                    stack.push((left, start, mid, depth + 1));
                }
            }
        }
        DecisionTree { nodes: self.nodes }
    }

    fn class_counts(&self, rows: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.data.n_classes];
        rows.iter().for_each(|&r| counts[self.data.y[r]] += 1);
        counts
    }

    /// Visits features in a fresh random order and keeps going past `mtry`
    /// until at least `mtry` features admitted a valid split (or none are
    /// left), so constant features never starve a node.
    fn best_split(&mut self, rows: &[usize], counts: &[u64]) -> Option<Candidate> {
        self.feature_order.shuffle(&mut self.rng);
        let mut best: Option<Candidate> = None;
        let mut informative = 0;
        for k in 0..self.feature_order.len() {
            if informative >= self.mtry {
                break;
            }
            let f = self.feature_order[k];
            if let Some(c) = self.best_threshold(rows, counts, f) {
                informative += 1;
                if best.as_ref().is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Best Gini split on one feature. Maximizes Σ c_L²/n_L + Σ c_R²/n_R,
    /// which is equivalent to minimizing the size-weighted child impurity.
    fn best_threshold(&mut self, rows: &[usize], counts: &[u64], feature: usize) -> Option<Candidate> {
        let n = rows.len();
        self.scratch.clear();
        self.scratch.extend(rows.iter().map(|&r| (self.data.value(r, feature), self.data.y[r])));
        self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if self.scratch[0].0 == self.scratch[n - 1].0 {
            return None;
        }

        let mut left = vec![0u64; counts.len()];
        let mut right = counts.to_vec();
        let mut sq_left = 0.0f64;
        let mut sq_right: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            let k = self.scratch[i].1;
            sq_left += (2 * left[k] + 1) as f64;
            sq_right -= (2 * right[k] - 1) as f64;
            left[k] += 1;
            right[k] -= 1;

            let (v, next) = (self.scratch[i].0, self.scratch[i + 1].0);
            let n_left = i + 1;
            if v == next || n_left < self.min_leaf || n - n_left < self.min_leaf {
                continue;
            }
            let score = sq_left / n_left as f64 + sq_right / (n - n_left) as f64;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                best = Some(Candidate { feature, threshold, score });
            }
        }
        best
    }
}

/// Moves elements satisfying `pred` to the front, keeping relative order
/// on both sides; returns the size of the front part.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let k = yes.len();
    rows[..k].copy_from_slice(&yes);
    rows[k..].copy_from_slice(&no);
    k
}
