use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adadelta::{AdaDeltaConfig, OptimizerState};
use super::backprop::{backward_unchecked, batch_loss, BatchStats, Triple};
use super::model::GeneratorModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub optimizer: AdaDeltaConfig,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            max_epochs: 50,
            optimizer: AdaDeltaConfig::default(),
            patience: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-token cross-entropy over the training set after the epoch.
    pub train_loss: f64,
    pub val_perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_train_loss: f64,
    pub initial_val_perplexity: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; 0 means the initial model.
    pub best_epoch: usize,
    pub best_val_perplexity: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_train_loss, |e| e.train_loss)
    }
}

fn validate_all(model: &GeneratorModel, triples: &[Triple]) -> Result<()> {
    triples.iter().try_for_each(|t| t.validate(model))
}

fn ppl(stats: &BatchStats) -> f64 {
    stats.mean_per_token().exp()
}

/// `exp(total cross-entropy / total target tokens)`.
pub fn perplexity(model: &GeneratorModel, triples: &[Triple]) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::invalid("perplexity of an empty set"));
    }
    Ok(ppl(&batch_loss(model, triples)?))
}

/// Perplexity accumulated batch by batch.
pub fn perplexity_batched(model: &GeneratorModel, triples: &[Triple], batch_size: usize) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::invalid("perplexity of an empty set"));
    }
    let mut total = 0.0;
    let mut tokens = 0;
    for batch in triples.chunks(batch_size.max(1)) {
        let s = batch_loss(model, batch)?;
        total += s.loss;
        tokens += s.tokens;
    }
    Ok((total / tokens.max(1) as f64).exp())
}

/// Mini-batch AdaDelta with seeded per-epoch shuffling and early stopping
/// on validation perplexity. Returns the best-validation parameters.
///
/// Samples are processed at their own lengths, which is equivalent to
/// PAD-padding the batch and masking PAD positions out of the loss.
pub fn train(
    mut model: GeneratorModel,
    train: &[Triple],
    val: &[Triple],
    config: &TrainConfig,
) -> Result<(GeneratorModel, TrainHistory)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    validate_all(&model, train)?;
    validate_all(&model, val)?;

    let initial_train = batch_loss(&model, train)?;
    let initial_ppl = ppl(&batch_loss(&model, val)?);
    info!(
        "training {} on {} samples: initial loss {:.4}/token, val ppl {:.3}",
        model.arch.as_str(),
        train.len(),
        initial_train.mean_per_token(),
        initial_ppl
    );

    let mut history = TrainHistory {
        initial_train_loss: initial_train.mean_per_token(),
        initial_val_perplexity: initial_ppl,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_perplexity: initial_ppl,
        stopped_early: false,
    };
    let mut best = model.clone();
    let mut since_best = 0;
    let mut optimizer = OptimizerState::new(&model, config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut clamped_total = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let (mut grads, stats) = backward_unchecked(&model, &batch);
            if !stats.loss.is_finite() || !grads.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("batch loss {} over {} samples", stats.loss, stats.samples),
                });
            }
            clamped_total += stats.clamped;
            grads.scale(1.0 / stats.samples as f64);
            optimizer.update(&mut model, &grads);
        }

        let train_stats = batch_loss(&model, train)?;
        let val_ppl = ppl(&batch_loss(&model, val)?);
        if !train_stats.loss.is_finite() || !val_ppl.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("train loss {} / val perplexity {val_ppl}", train_stats.loss),
            });
        }
        debug!(
            "epoch {epoch}: train {:.4}/token, val ppl {val_ppl:.3}",
            train_stats.mean_per_token()
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: train_stats.mean_per_token(),
            val_perplexity: val_ppl,
        });

        if val_ppl < history.best_val_perplexity {
            history.best_val_perplexity = val_ppl;
            history.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    if clamped_total > 0 {
        warn!("{clamped_total} target probabilities were floored during training");
    }
    info!(
        "best epoch {} (val ppl {:.3}) after {} epochs",
        history.best_epoch,
        history.best_val_perplexity,
        history.epochs.len()
    );
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BOS, EOS};
    use crate::neural::model::{Architecture, ModelDims};
    use approx::assert_relative_eq;

    fn dims() -> ModelDims {
        ModelDims { enc_vocab: 12, dec_vocab: 12, embed_dim: 4, hidden_dim: 6 }
    }

    fn toy(n: usize) -> Vec<Triple> {
        (0..n)
            .map(|i| {
                let a = 4 + i % 8;
                let b = 4 + (i * 3) % 8;
                Triple {
                    query: vec![a, b],
                    retrieved: Some(vec![b]),
                    reply: vec![BOS, b, a, EOS],
                }
            })
            .collect()
    }

    #[test]
    fn perplexity_identities() {
        let mut m = GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 1);
        m.zero_output_layer();
        assert_relative_eq!(perplexity(&m, &toy(7)).unwrap(), 12.0, max_relative = 1e-12);
        assert!(perplexity(&m, &[]).is_err());
    }

    #[test]
    fn perplexity_ignores_batch_size() {
        let m = GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 1);
        let data = toy(13);
        let one = perplexity_batched(&m, &data, 1).unwrap();
        let eight = perplexity_batched(&m, &data, 8).unwrap();
        assert_relative_eq!(one, eight, max_relative = 1e-12);
        assert_relative_eq!(one, perplexity(&m, &data).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = TrainConfig { batch_size: 4, max_epochs: 5, patience: 10, seed: 3, ..Default::default() };
        let m = GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 1);
        let (a, ha) = train(m.clone(), &toy(12), &toy(4), &cfg).unwrap();
        let (b, hb) = train(m, &toy(12), &toy(4), &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_patience_stops_on_first_miss() {
        // Validation on targets the model never trains toward, so perplexity
        // eventually stops improving.
        let val = vec![Triple { query: vec![5], retrieved: Some(vec![6]), reply: vec![BOS, 11, 11, 11, EOS] }];
        let cfg = TrainConfig { batch_size: 4, max_epochs: 200, patience: 0, seed: 0, ..Default::default() };
        let m = GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 1);
        let (_, h) = train(m, &toy(12), &val, &cfg).unwrap();
        assert!(h.stopped_early);
        let last = h.epochs.len();
        assert_eq!(h.best_epoch + 1, last);
        let prev_best = if h.best_epoch == 0 { h.initial_val_perplexity } else { h.epochs[h.best_epoch - 1].val_perplexity };
        assert!(h.epochs[last - 1].val_perplexity >= prev_best);
    }

    #[test]
    fn rejects_empty_sets() {
        let m = GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 1);
        assert!(train(m.clone(), &[], &toy(2), &TrainConfig::default()).is_err());
        assert!(train(m, &toy(2), &[], &TrainConfig::default()).is_err());
    }
}
