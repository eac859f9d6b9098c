use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenSeq;
use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;
/// Added to the numerator of a zero n-gram precision.
pub const ZERO_PRECISION_SMOOTHING: f64 = 1e-9;

/// Corpus-level BLEU breakdown. Scores are on the 0..100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// Cumulative BLEU-n for n = 1..=max_n.
    pub cumulative: Vec<f64>,
    /// BLEU-n using only the n-th order precision, for n = 1..=max_n.
    pub individual: Vec<f64>,
    /// Clipped n-gram precisions (0..1), after smoothing.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub candidate_length: usize,
    pub reference_length: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and total candidate n-grams for one order.
fn order_totals(candidates: &[TokenSeq], references: &[TokenSeq], n: usize) -> (usize, usize) {
    let mut matched = 0;
    let mut total = 0;
    for (c, r) in candidates.iter().zip(references) {
        let rc = ngram_counts(r.tokens(), n);
        for (gram, count) in ngram_counts(c.tokens(), n) {
            matched += count.min(rc.get(gram).copied().unwrap_or(0));
            total += count;
        }
    }
    (matched, total)
}

/// Smoothed precision. An order with no candidate n-grams at all counts as
/// a zero precision over one n-gram.
fn smoothed_precision(matched: usize, total: usize) -> f64 {
    let num = if matched == 0 {
        ZERO_PRECISION_SMOOTHING
    } else {
        matched as f64
    };
    num / total.max(1) as f64
}

pub fn brevity_penalty(candidate_length: usize, reference_length: usize) -> f64 {
    if candidate_length == 0 {
        return 0.0;
    }
    (1.0 - reference_length as f64 / candidate_length as f64).min(0.0).exp()
}

pub fn bleu_detail(candidates: &[TokenSeq], references: &[TokenSeq], max_n: usize) -> Result<BleuScore> {
    if candidates.is_empty() {
        return Err(Error::invalid("BLEU needs at least one candidate"));
    }
    if candidates.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if !(1..=MAX_ORDER).contains(&max_n) {
        return Err(Error::invalid(format!("max_n must be in 1..={MAX_ORDER}, got {max_n}")));
    }
    let candidate_length = candidates.iter().map(TokenSeq::len).sum();
    let reference_length = references.iter().map(TokenSeq::len).sum();
    let bp = brevity_penalty(candidate_length, reference_length);

    let precisions: Vec<f64> = (1..=max_n)
        .map(|n| {
            let (m, t) = order_totals(candidates, references, n);
            smoothed_precision(m, t)
        })
        .collect();
    let mut log_sum = 0.0;
    let cumulative = precisions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            log_sum += p.ln();
            100.0 * bp * (log_sum / (i + 1) as f64).exp()
        })
        .collect();
    let individual = precisions.iter().map(|p| 100.0 * bp * p).collect();
    Ok(BleuScore {
        cumulative,
        individual,
        precisions,
        brevity_penalty: bp,
        candidate_length,
        reference_length,
    })
}

/// Cumulative corpus BLEU-`max_n` on the 0..100 scale.
pub fn bleu(candidates: &[TokenSeq], references: &[TokenSeq], max_n: usize) -> Result<f64> {
    Ok(*bleu_detail(candidates, references, max_n)?
        .cumulative
        .last()
        .expect("max_n >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_whitespace(s)
    }

    #[test]
    fn hand_computed_values() {
        let c = [seq("a b c")];
        let r = [seq("a b d")];
        assert_abs_diff_eq!(bleu(&c, &r, 1).unwrap(), 100.0 * 2.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bleu(&c, &r, 2).unwrap(), 100.0 * (2.0f64 / 3.0 * 0.5).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn identical_corpus_scores_100() {
        let c = [seq("a b c d e"), seq("x y z w")];
        for n in 1..=4 {
            assert_abs_diff_eq!(bleu(&c, &c, n).unwrap(), 100.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn short_candidate_is_penalized() {
        let s = bleu_detail(&[seq("a b")], &[seq("a b c d")], 1).unwrap();
        assert_abs_diff_eq!(s.brevity_penalty, (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.cumulative[0], 100.0 * (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn clipping_limits_repeated_tokens() {
        let s = bleu_detail(&[seq("the the the the")], &[seq("the cat the mat")], 1).unwrap();
        assert_abs_diff_eq!(s.precisions[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_precision_is_smoothed() {
        let s = bleu_detail(&[seq("a b")], &[seq("b a")], 2).unwrap();
        assert_abs_diff_eq!(s.precisions[1], 1e-9, epsilon = 1e-20);
        assert!(s.cumulative[1] > 0.0 && s.cumulative[1] < 1e-2);
    }

    #[test]
    fn errors() {
        assert!(bleu(&[], &[], 1).is_err());
        assert!(bleu(&[seq("a")], &[], 1).is_err());
        assert!(bleu(&[seq("a")], &[seq("a")], 0).is_err());
        assert!(bleu(&[seq("a")], &[seq("a")], 5).is_err());
    }

    proptest! {
        #[test]
        fn order_invariant(pairs in prop::collection::vec(("[a-d]( [a-d]){0,5}", "[a-d]( [a-d]){0,5}"), 1..10)) {
            let c: Vec<TokenSeq> = pairs.iter().map(|p| seq(&p.0)).collect();
            let r: Vec<TokenSeq> = pairs.iter().map(|p| seq(&p.1)).collect();
            let mut cr: Vec<_> = c.iter().cloned().zip(r.iter().cloned()).collect();
            cr.reverse();
            let (c2, r2): (Vec<_>, Vec<_>) = cr.into_iter().unzip();
            for n in 1..=4 {
                let a = bleu(&c, &r, n).unwrap();
                prop_assert_eq!(a, bleu(&c2, &r2, n).unwrap());
                prop_assert!((0.0..=100.0).contains(&a));
            }
        }
    }
}
