use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pairwise-disjoint train / validation / test id sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles ids `0..n_pairs` with a seeded RNG and cuts them by `ratios`.
///
/// Validation and test sizes are rounded to the nearest integer with a
/// floor of one each; train takes the remainder and must stay non-empty.
pub fn split_dataset(n_pairs: usize, ratios: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    let (tr, va, te) = ratios;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) {
        return Err(Error::invalid("split ratios must be positive"));
    }
    if ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must sum to 1, got {}",
            tr + va + te
        )));
    }
    if n_pairs < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 pairs to split, got {n_pairs}"
        )));
    }
    let n = n_pairs as f64;
    let n_val = ((n * va).round() as usize).max(1);
    let n_test = ((n * te).round() as usize).max(1);
    if n_val + n_test >= n_pairs {
        return Err(Error::invalid("split leaves no training pairs"));
    }
    let mut ids: Vec<usize> = (0..n_pairs).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = ids.split_off(n_pairs - n_test);
    let validation = ids.split_off(ids.len() - n_val);
    Ok(DatasetSplit {
        train: ids,
        validation,
        test,
    })
}
