//! Full-batch logistic regression on [`FeatureVector`]s.

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_COUNT};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            epochs: 500,
            learning_rate: 0.5,
            l2: 1e-4,
            seed: 0,
        }
    }
}

pub type Weights = [f64; FEATURE_COUNT];

/// σ(z), clamped into the open interval (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean cross-entropy plus `l2/2 · ‖w‖²`, and its gradient.
pub fn loss_and_grad(weights: &Weights, examples: &[LabeledExample], l2: f64) -> (f64, Weights) {
    let n = examples.len().max(1) as f64;
    let (ce, grad) = par::chunked_fold(
        examples,
        || (0.0, [0.0; FEATURE_COUNT]),
        |(loss, g), ex| {
            let z = ex.features.dot(weights);
            let y = if ex.label { 1.0 } else { 0.0 };
            *loss += softplus(z) - y * z;
            let residual = sigmoid(z) - y;
            for (gi, fi) in g.iter_mut().zip(&ex.features.0) {
                *gi += residual * fi;
            }
        },
        |(la, ga), (lb, gb)| {
            *la += lb;
            for (a, b) in ga.iter_mut().zip(gb) {
                *a += b;
            }
        },
    )
    .unwrap_or((0.0, [0.0; FEATURE_COUNT]));
    let reg: f64 = weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    let mut g = grad;
    for (gi, wi) in g.iter_mut().zip(weights) {
        *gi = *gi / n + l2 * wi;
    }
    (ce / n + reg, g)
}

pub fn accuracy(weights: &Weights, examples: &[LabeledExample]) -> f64 {
    let correct = examples
        .iter()
        .filter(|ex| (ex.features.dot(weights) > 0.0) == ex.label)
        .count();
    correct as f64 / examples.len().max(1) as f64
}

/// Gradient descent from zero weights. Returns the weights and the loss
/// before training followed by the loss after every epoch.
pub fn train_logistic(examples: &[LabeledExample], config: &LogisticConfig) -> Result<(Weights, Vec<f64>)> {
    let positives = examples.iter().filter(|e| e.label).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::invalid(
            "matcher training needs both positive and negative examples",
        ));
    }
    let mut w = [0.0; FEATURE_COUNT];
    let (mut loss, mut grad) = loss_and_grad(&w, examples, config.l2);
    let mut history = Vec::with_capacity(config.epochs + 1);
    history.push(loss);
    for epoch in 0..config.epochs {
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= config.learning_rate * gi;
        }
        (loss, grad) = loss_and_grad(&w, examples, config.l2);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("matcher loss became {loss}"),
            });
        }
        history.push(loss);
    }
    Ok((w, history))
}
