use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, EmbeddingTable};
use super::logistic::LabeledExample;
use crate::corpus::QueryReplyPair;
use crate::index::InvertedIndex;
use crate::{par, Error, Result};

/// A ⟨q, q*, r*⟩ training triple expressed as pair ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchExample {
    /// Pair providing q.
    pub query_pair: usize,
    /// Pair providing q*.
    pub qstar_pair: usize,
    /// Pair providing r*.
    pub rstar_pair: usize,
    pub label: bool,
}

/// One positive per pair, `(q, q, r)`, plus `ratio` negatives per positive.
///
/// Negatives borrow r* from a uniformly drawn different pair; they
/// alternate between also borrowing that pair's q* and keeping q* = q, so
/// the classifier sees mismatched replies under a matching query too.
pub fn generate_examples(pairs: &[QueryReplyPair], ratio: usize, seed: u64) -> Result<Vec<MatchExample>> {
    if pairs.len() < 2 {
        return Err(Error::invalid("negative sampling needs at least two pairs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pairs.len();
    let mut out = Vec::with_capacity(n * (1 + ratio));
    for i in 0..n {
        out.push(MatchExample {
            query_pair: i,
            qstar_pair: i,
            rstar_pair: i,
            label: true,
        });
        for k in 0..ratio {
            // uniform over the other n - 1 pairs
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let swap_query = (i + k) % 2 == 0;
            out.push(MatchExample {
                query_pair: i,
                qstar_pair: if swap_query { j } else { i },
                rstar_pair: j,
                label: false,
            });
        }
    }
    Ok(out)
}

pub fn featurize(
    examples: &[MatchExample],
    pairs: &[QueryReplyPair],
    index: &InvertedIndex,
    embeddings: Option<&EmbeddingTable>,
) -> Vec<LabeledExample> {
    par::map(examples, |ex| LabeledExample {
        features: extract_features(
            &pairs[ex.query_pair].query,
            Some(&pairs[ex.qstar_pair].query),
            &pairs[ex.rstar_pair].reply,
            index,
            embeddings,
        ),
        label: ex.label,
    })
}
