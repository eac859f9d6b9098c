//! Greedy and beam-search decoding.

use std::cmp::Ordering;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::model::{log_softmax, GeneratorModel};
use crate::corpus::{BOS, EOS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Maximum decoding steps, EOS included.
    pub max_len: usize,
    /// 1 = greedy.
    pub beam_width: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            max_len: 20,
            beam_width: 1,
        }
    }
}

/// Index of the largest value, lowest index on ties.
fn argmax(v: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl GeneratorModel {
    /// One decoder step: feeds `token`, returns the new state and the
    /// next-token log-probabilities.
    pub fn decoder_step(&self, token: usize, h: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
        let h = self.dec.gru.forward(self.dec.embedding.row(token), h.view()).h;
        let lp = log_softmax(&self.logits(&h));
        (h, lp)
    }
}

/// Generates reply ids (without BOS/EOS) for a query and optional
/// retrieved reply.
pub fn generate(
    model: &GeneratorModel,
    q_ids: &[usize],
    rstar_ids: Option<&[usize]>,
    config: &DecodeConfig,
) -> Result<Vec<usize>> {
    if config.max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    let h0 = model.initial_state(q_ids, rstar_ids)?;
    if config.beam_width <= 1 {
        Ok(greedy(model, h0, config.max_len))
    } else {
        Ok(beam(model, h0, config.max_len, config.beam_width))
    }
}

fn greedy(model: &GeneratorModel, mut h: Array1<f64>, max_len: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut token = BOS;
    for _ in 0..max_len {
        let (next_h, lp) = model.decoder_step(token, &h);
        h = next_h;
        token = argmax(&lp);
        if token == EOS {
            break;
        }
        out.push(token);
    }
    out
}

#[derive(Clone)]
struct Hypothesis {
    tokens: Vec<usize>,
    log_prob: f64,
    h: Array1<f64>,
}

struct Finished {
    tokens: Vec<usize>,
    /// Mean log-probability per generated token, EOS counted.
    score: f64,
}

/// Length-normalized beam search. Expansion ties prefer the earlier beam
/// and then the lower token id.
fn beam(model: &GeneratorModel, h0: Array1<f64>, max_len: usize, width: usize) -> Vec<usize> {
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        h: h0,
    }];
    let mut finished: Vec<Finished> = Vec::new();

    for step in 0..max_len {
        let mut expansions: Vec<(usize, usize, f64, Array1<f64>)> = Vec::new();
        for (bi, hyp) in live.iter().enumerate() {
            let last = hyp.tokens.last().copied().unwrap_or(BOS);
            let (h, lp) = model.decoder_step(last, &hyp.h);
            for (tok, &l) in lp.iter().enumerate() {
                expansions.push((bi, tok, hyp.log_prob + l, h.clone()));
            }
        }
        expansions.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });

        let mut next = Vec::with_capacity(width);
        for (bi, tok, log_prob, h) in expansions.into_iter().take(width) {
            let len = live[bi].tokens.len() + 1;
            if tok == EOS {
                finished.push(Finished {
                    tokens: live[bi].tokens.clone(),
                    score: log_prob / len as f64,
                });
            } else {
                let mut tokens = live[bi].tokens.clone();
                tokens.push(tok);
                next.push(Hypothesis { tokens, log_prob, h });
            }
        }
        live = next;
        if live.is_empty() || finished.len() >= width {
            break;
        }
        if step + 1 == max_len {
            finished.extend(live.iter().map(|hyp| Finished {
                tokens: hyp.tokens.clone(),
                score: hyp.log_prob / hyp.tokens.len() as f64,
            }));
        }
    }

    finished
        .into_iter()
        .min_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        })
        .map(|f| f.tokens)
        .unwrap_or_default()
}
