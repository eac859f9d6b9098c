use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenSeq, Vocabulary, RESERVED_COUNT};
use crate::index::{sparse_cosine, InvertedIndex};

pub const FEATURE_COUNT: usize = 8;

/// Feature order is part of the persisted model format.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "overlap_qq",
    "overlap_qr",
    "tfidf_cos_qq",
    "tfidf_cos_qr",
    "emb_cos_qq",
    "emb_cos_qr",
    "len_ratio",
    "bias",
];

pub const FEATURE_SET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, weights: &[f64; FEATURE_COUNT]) -> f64 {
        self.0.iter().zip(weights).map(|(f, w)| f * w).sum()
    }
}

/// Token embeddings used for the sentence-vector cosine features.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    vectors: Array2<f64>,
}

impl EmbeddingTable {
    pub fn new(vocab: Vocabulary, vectors: Array2<f64>) -> crate::Result<Self> {
        if vectors.nrows() != vocab.size() {
            return Err(crate::Error::Shape(format!(
                "embedding table has {} rows for a vocabulary of {}",
                vectors.nrows(),
                vocab.size()
            )));
        }
        Ok(EmbeddingTable { vocab, vectors })
    }

    /// Seeded uniform(-1, 1) table.
    pub fn random(vocab: Vocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = Array2::from_shape_fn((vocab.size(), dim), |_| rng.random_range(-1.0..1.0));
        EmbeddingTable { vocab, vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Mean of the vectors of in-vocabulary tokens; zero when none are known.
    pub fn sentence_vector(&self, seq: &TokenSeq) -> Array1<f64> {
        let mut sum = Array1::zeros(self.dim());
        let mut n = 0usize;
        for id in seq.iter().filter_map(|t| self.vocab.id(t)) {
            debug_assert!(id >= RESERVED_COUNT);
            sum += &self.vectors.row(id);
            n += 1;
        }
        if n > 0 {
            sum /= n as f64;
        }
        sum
    }
}

fn dense_cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Jaccard overlap of the token sets; 0 when both are empty.
pub fn jaccard(a: &TokenSeq, b: &TokenSeq) -> f64 {
    let sa: BTreeSet<&str> = a.iter().collect();
    let sb: BTreeSet<&str> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        0.0
    } else {
        sa.intersection(&sb).count() as f64 / union as f64
    }
}

fn len_ratio(a: &TokenSeq, b: &TokenSeq) -> f64 {
    let (x, y) = (a.len(), b.len());
    if x.max(y) == 0 {
        0.0
    } else {
        x.min(y) as f64 / x.max(y) as f64
    }
}

/// Features of `q` against a stored pair ⟨q*, r*⟩. Without `q_star` (a
/// generated candidate) the q–q* features are zero; without embeddings the
/// embedding cosines are zero.
pub fn extract_features(
    q: &TokenSeq,
    q_star: Option<&TokenSeq>,
    r_star: &TokenSeq,
    index: &InvertedIndex,
    embeddings: Option<&EmbeddingTable>,
) -> FeatureVector {
    let q_tfidf = index.tfidf_vector(q);
    let q_emb = embeddings.map(|e| e.sentence_vector(q));

    let mut f = [0.0; FEATURE_COUNT];
    f[1] = jaccard(q, r_star);
    f[3] = sparse_cosine(&q_tfidf, &index.tfidf_vector(r_star));
    if let (Some(e), Some(qv)) = (embeddings, &q_emb) {
        f[5] = dense_cosine(qv, &e.sentence_vector(r_star));
    }
    if let Some(qs) = q_star {
        f[0] = jaccard(q, qs);
        f[2] = sparse_cosine(&q_tfidf, &index.tfidf_vector(qs));
        if let (Some(e), Some(qv)) = (embeddings, &q_emb) {
            f[4] = dense_cosine(qv, &e.sentence_vector(qs));
        }
        f[6] = len_ratio(q, qs);
    }
    f[7] = 1.0;
    FeatureVector(f)
}
