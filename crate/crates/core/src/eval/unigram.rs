use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenSeq, Vocabulary, RESERVED, UNK};
use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 1.0;

/// Add-α smoothed unigram distribution over a fixed support. Tokens outside
/// the support are scored as the designated unknown row.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    rows: HashMap<String, usize>,
    probs: Vec<f64>,
    /// `-ln p`, computed as `ln(denominator) - ln(numerator)`.
    neg_log_probs: Vec<f64>,
    unk: usize,
    alpha: f64,
}

impl UnigramModel {
    /// `p(w) = (count(w) + α) / (total + α·V)` with V = `support.len()`.
    pub fn estimate<'a, I>(support: Vec<String>, unk_token: &str, replies: I, alpha: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TokenSeq>,
    {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("smoothing must be finite and non-negative, got {alpha}")));
        }
        let mut rows = HashMap::with_capacity(support.len());
        for (i, tok) in support.into_iter().enumerate() {
            if rows.insert(tok.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate support token {tok:?}")));
            }
        }
        let unk = *rows
            .get(unk_token)
            .ok_or_else(|| Error::invalid(format!("support lacks the unknown token {unk_token:?}")))?;
        let v = rows.len();
        let mut counts = vec![0usize; v];
        let mut total = 0usize;
        for reply in replies {
            for tok in reply.iter() {
                counts[rows.get(tok).copied().unwrap_or(unk)] += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::invalid("unigram model needs at least one token"));
        }
        let denom = total as f64 + alpha * v as f64;
        let probs: Vec<f64> = counts.iter().map(|&c| (c as f64 + alpha) / denom).collect();
        let neg_log_probs = counts.iter().map(|&c| denom.ln() - (c as f64 + alpha).ln()).collect();
        if let Some(i) = probs.iter().position(|&p| p <= 0.0) {
            let tok = rows.iter().find(|(_, &r)| r == i).map(|(t, _)| t.clone()).unwrap_or_default();
            return Err(Error::invalid(format!(
                "zero smoothing leaves {tok:?} with probability 0"
            )));
        }
        Ok(UnigramModel {
            rows,
            probs,
            neg_log_probs,
            unk,
            alpha,
        })
    }

    pub fn uniform(support: Vec<String>, unk_token: &str) -> Result<Self> {
        let v = support.len();
        let mut m = Self::estimate(support, unk_token, &[TokenSeq::from_whitespace(unk_token)], 1.0)?;
        m.probs = vec![1.0 / v as f64; v];
        m.neg_log_probs = vec![(v as f64).ln(); v];
        Ok(m)
    }

    fn row(&self, token: &str) -> usize {
        self.rows.get(token).copied().unwrap_or(self.unk)
    }

    pub fn prob(&self, token: &str) -> f64 {
        self.probs[self.row(token)]
    }

    pub fn neg_log_prob(&self, token: &str) -> f64 {
        self.neg_log_probs[self.row(token)]
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn total_probability(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Support = every row of `vocab`, reserved rows included.
pub fn vocabulary_support(vocab: &Vocabulary) -> Vec<String> {
    (0..vocab.size())
        .map(|i| match RESERVED.get(i) {
            Some(name) => (*name).to_owned(),
            None => vocab.token(i).expect("id below size").to_owned(),
        })
        .collect()
}

/// Unigram model over a vocabulary; out-of-vocabulary tokens count as UNK.
pub fn build_unigram(replies: &[TokenSeq], vocab: &Vocabulary, alpha: f64) -> Result<UnigramModel> {
    UnigramModel::estimate(vocabulary_support(vocab), RESERVED[UNK], replies, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyDenominator {
    #[default]
    PerToken,
    PerReply,
}

impl std::str::FromStr for EntropyDenominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_token" => Ok(EntropyDenominator::PerToken),
            "per_reply" => Ok(EntropyDenominator::PerReply),
            other => Err(Error::invalid(format!("unknown entropy denominator {other:?}"))),
        }
    }
}

/// `-Σ log p(w)` over every token of every reply, divided by the token or
/// reply count. Natural log.
///
/// Terms are accumulated as offsets from the first one, so a corpus whose
/// tokens all have the same probability gets exactly that `-ln p` back.
pub fn corpus_entropy<'a, I>(replies: I, model: &UnigramModel, denominator: EntropyDenominator) -> Result<f64>
where
    I: IntoIterator<Item = &'a TokenSeq>,
{
    let mut first: Option<f64> = None;
    let mut offset_sum = 0.0;
    let mut tokens = 0usize;
    let mut n_replies = 0usize;
    for reply in replies {
        n_replies += 1;
        for tok in reply.iter() {
            let x = model.neg_log_prob(tok);
            let x0 = *first.get_or_insert(x);
            offset_sum += x - x0;
            tokens += 1;
        }
    }
    let x0 = first.unwrap_or(0.0);
    match denominator {
        EntropyDenominator::PerToken if tokens > 0 => Ok(x0 + offset_sum / tokens as f64),
        EntropyDenominator::PerReply if n_replies > 0 => Ok((x0 * tokens as f64 + offset_sum) / n_replies as f64),
        _ => Err(Error::invalid("entropy of an empty corpus")),
    }
}

pub fn mean_length<'a, I>(replies: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a TokenSeq>,
{
    let (mut n, mut total) = (0usize, 0usize);
    for r in replies {
        n += 1;
        total += r.len();
    }
    if n == 0 {
        return Err(Error::invalid("mean length of zero replies"));
    }
    Ok(total as f64 / n as f64)
}
