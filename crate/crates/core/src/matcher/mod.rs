//! Fine-grained relevance scoring.
//!
//! A single logistic classifier over q–q* and q–r* features judges whether a
//! stored pair ⟨q*, r*⟩ answers the query; its confidence is the match
//! score. The same scorer reranks retrieved and generated candidates.

mod features;
mod logistic;
mod sampling;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use features::{
    extract_features, jaccard, EmbeddingTable, FeatureVector, FEATURE_COUNT, FEATURE_NAMES,
    FEATURE_SET_VERSION,
};
pub use logistic::{
    accuracy, loss_and_grad, sigmoid, train_logistic, LabeledExample, LogisticConfig, Weights,
};
pub use sampling::{featurize, generate_examples, MatchExample};

use crate::corpus::{QueryReplyPair, TokenSeq};
use crate::index::{CandidateSet, InvertedIndex};
use crate::{par, Error, Result};

const MATCHER_VERSION: u32 = 1;

/// Where the embedding features came from during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSource {
    None,
    /// Query-encoder embeddings of a generator checkpoint.
    Generator { manifest: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub final_loss: Option<f64>,
    pub training_accuracy: Option<f64>,
    pub n_examples: usize,
    pub embeddings: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatcherModel {
    pub weights: Weights,
    pub metadata: MatcherMetadata,
}

#[derive(Serialize, Deserialize)]
struct MatcherFile {
    version: u32,
    feature_set_version: u32,
    feature_names: Vec<String>,
    weights: Vec<f64>,
    metadata: MatcherMetadata,
}

/// Best candidate after fine ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedCandidate {
    pub pair_id: usize,
    pub score: f64,
    /// Position in the coarse candidate list.
    pub coarse_rank: usize,
}

impl MatcherModel {
    pub fn from_weights(weights: Weights) -> Self {
        MatcherModel {
            weights,
            metadata: MatcherMetadata {
                seed: 0,
                epochs: 0,
                learning_rate: 0.0,
                l2: 0.0,
                final_loss: None,
                training_accuracy: None,
                n_examples: 0,
                embeddings: EmbeddingSource::None,
            },
        }
    }

    /// `σ(w · f)`.
    pub fn score(&self, features: &FeatureVector) -> f64 {
        sigmoid(features.dot(&self.weights))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MatcherFile {
            version: MATCHER_VERSION,
            feature_set_version: FEATURE_SET_VERSION,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: self.weights.to_vec(),
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MatcherFile = serde_json::from_str(text)?;
        if file.version != MATCHER_VERSION || file.feature_set_version != FEATURE_SET_VERSION {
            return Err(Error::artifact(
                "matcher",
                format!(
                    "unsupported version {} / feature set {}",
                    file.version, file.feature_set_version
                ),
            ));
        }
        if file.feature_names != FEATURE_NAMES {
            return Err(Error::artifact("matcher", "feature names do not match this build"));
        }
        let weights: Weights = file
            .weights
            .try_into()
            .map_err(|_| Error::artifact("matcher", "weight vector has the wrong length"))?;
        Ok(MatcherModel {
            weights,
            metadata: file.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::artifact(path.display().to_string(), e))
    }
}

/// Trains the matcher on labeled feature vectors.
pub fn train_matcher(
    examples: &[LabeledExample],
    config: &LogisticConfig,
    embeddings: EmbeddingSource,
) -> Result<(MatcherModel, Vec<f64>)> {
    let (weights, history) = train_logistic(examples, config)?;
    let metadata = MatcherMetadata {
        seed: config.seed,
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        l2: config.l2,
        final_loss: history.last().copied(),
        training_accuracy: Some(accuracy(&weights, examples)),
        n_examples: examples.len(),
        embeddings,
    };
    Ok((MatcherModel { weights, metadata }, history))
}

/// Scores every coarse candidate against `q` and returns the best one,
/// earliest coarse rank winning exact ties. `None` when there are no
/// candidates.
pub fn rank_candidates(
    q: &TokenSeq,
    candidates: &CandidateSet,
    pairs: &[QueryReplyPair],
    model: &MatcherModel,
    index: &InvertedIndex,
    embeddings: Option<&EmbeddingTable>,
) -> Option<RankedCandidate> {
    let scores = par::map(&candidates.entries, |&(id, _)| {
        let pair = &pairs[id];
        let f = extract_features(q, Some(&pair.query), &pair.reply, index, embeddings);
        model.score(&f)
    });
    let mut best: Option<RankedCandidate> = None;
    for (rank, (&(pair_id, _), score)) in candidates.entries.iter().zip(scores).enumerate() {
        if best.is_none_or(|b| score > b.score) {
            best = Some(RankedCandidate {
                pair_id,
                score,
                coarse_rank: rank,
            });
        }
    }
    best
}
