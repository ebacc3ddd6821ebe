//! Multinomial logistic regression trained by full-batch gradient descent.
//!
//! Inputs are standardized with training-set statistics (stored with the
//! model), then scored as `W · [z; 1]` with `W` of shape
//! `n_classes × (D + 1)`, the last column being the bias.

use serde::{Deserialize, Serialize};

use super::forest::TrainingSet;
use super::ProbabilisticClassifier;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxParams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Strength of the `(l2 / 2)·‖W‖²` penalty; biases are not penalized.
    pub l2: f64,
    pub standardize: bool,
}

impl Default for SoftmaxParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 500,
            l2: 1e-4,
            standardize: true,
        }
    }
}

const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxProbe {
    pub(crate) n_features: usize,
    pub(crate) n_classes: usize,
    /// Row-major `n_classes × (n_features + 1)`.
    pub(crate) weights: Vec<f64>,
    pub(crate) feature_mean: Vec<f64>,
    pub(crate) feature_scale: Vec<f64>,
    pub(crate) params: SoftmaxParams,
    pub(crate) seed: u64,
    /// Training loss after each accepted step, starting at initialization.
    #[serde(default)]
    pub(crate) loss_history: Vec<f64>,
}

impl SoftmaxProbe {
    /// Untrained probe with all weights zero.
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        Self {
            n_features,
            n_classes,
            weights: vec![0.0; n_classes * (n_features + 1)],
            feature_mean: vec![0.0; n_features],
            feature_scale: vec![1.0; n_features],
            params: SoftmaxParams::default(),
            seed: 0,
            loss_history: Vec::new(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn params(&self) -> &SoftmaxParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    fn standardized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = self.weights.len() == self.n_classes * (self.n_features + 1)
            && self.feature_mean.len() == self.n_features
            && self.feature_scale.len() == self.n_features
            && self.weights.iter().chain(&self.feature_mean).all(|v| v.is_finite())
            && self.feature_scale.iter().all(|s| s.is_finite() && *s > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::arg("malformed softmax probe"))
        }
    }
}

impl ProbabilisticClassifier for SoftmaxProbe {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        super::check_dim(x, self.n_features)?;
        let z = self.standardized(x);
        let mut logits = scores(&self.weights, &z, self.n_classes);
        softmax_in_place(&mut logits);
        Ok(logits)
    }
}

fn scores(weights: &[f64], x: &[f64], n_classes: usize) -> Vec<f64> {
    let stride = x.len() + 1;
    (0..n_classes)
        .map(|k| {
            let w = &weights[k * stride..(k + 1) * stride];
            w[..x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[x.len()]
        })
        .collect()
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for e in v.iter_mut() {
        *e = (*e - max).exp();
        sum += *e;
    }
    v.iter_mut().for_each(|e| *e /= sum);
}

/// Mean cross-entropy plus `(l2/2)·‖W_nobias‖²` and its gradient with
/// respect to `weights` (same layout as the weights).
pub fn loss_and_gradient(
    weights: &[f64],
    x: &[f64],
    y: &[usize],
    n_features: usize,
    n_classes: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    let stride = n_features + 1;
    let n = y.len() as f64;
    let mut grad = vec![0.0; weights.len()];
    let mut loss = 0.0;
    for (i, &label) in y.iter().enumerate() {
        let row = &x[i * n_features..(i + 1) * n_features];
        let mut s = scores(weights, row, n_classes);
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - s[label];
        for (k, sk) in s.iter_mut().enumerate() {
            let p = (*sk - lse).exp();
            let err = p - if k == label { 1.0 } else { 0.0 };
            let g = &mut grad[k * stride..(k + 1) * stride];
            for (gj, xj) in g[..n_features].iter_mut().zip(row) {
                *gj += err * xj;
            }
            g[n_features] += err;
        }
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);

    let mut penalty = 0.0;
    for k in 0..n_classes {
        for j in 0..n_features {
            let w = weights[k * stride + j];
            penalty += w * w;
            grad[k * stride + j] += l2 * w;
        }
    }
    (loss + 0.5 * l2 * penalty, grad)
}

fn column_stats(data: &TrainingSet<'_>, standardize: bool) -> (Vec<f64>, Vec<f64>) {
    let d = data.n_features;
    if !standardize {
        return (vec![0.0; d], vec![1.0; d]);
    }
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for row in data.x.chunks_exact(d) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in data.x.chunks_exact(d) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Gradient descent from zero weights. A step that would raise the loss is
/// retried with half the learning rate, at most ten times per epoch.
pub fn train_softmax(data: TrainingSet<'_>, params: &SoftmaxParams, seed: u64) -> Result<SoftmaxProbe> {
    if data.distinct_labels() < 2 {
        return Err(Error::Training(
            "training data contains a single class; the model would be degenerate".into(),
        ));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) || !(params.l2 >= 0.0) {
        return Err(Error::arg("learning rate must be positive and l2 non-negative"));
    }
    let (d, k) = (data.n_features, data.n_classes);
    let (mean, scale) = column_stats(&data, params.standardize);
    let z: Vec<f64> = data
        .x
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s))
        .collect();

    let mut w = vec![0.0; k * (d + 1)];
    let (mut loss, mut grad) = loss_and_gradient(&w, &z, data.y, d, k, params.l2);
    let mut history = vec![loss];
    let mut lr = params.learning_rate;

    'epochs: for epoch in 0..params.epochs {
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-12 {
            break;
        }
        let mut halvings = 0;
        loop {
            let candidate: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - lr * gi).collect();
            let (new_loss, new_grad) = loss_and_gradient(&candidate, &z, data.y, d, k, params.l2);
            if !new_loss.is_finite() {
                return Err(Error::Training(format!("loss became non-finite at epoch {epoch}")));
            }
            if new_loss <= loss {
                w = candidate;
                loss = new_loss;
                grad = new_grad;
                history.push(loss);
                break;
            }
            if new_loss - loss <= 1e-12 * loss.abs().max(1.0) {
                // within rounding of a stationary point
                break 'epochs;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::Training(format!(
                    "loss failed to decrease at epoch {epoch} after {MAX_HALVINGS} learning-rate halvings"
                )));
            }
            lr /= 2.0;
        }
    }

    Ok(SoftmaxProbe {
        n_features: d,
        n_classes: k,
        weights: w,
        feature_mean: mean,
        feature_scale: scale,
        params: params.clone(),
        seed,
        loss_history: history,
    })
}
