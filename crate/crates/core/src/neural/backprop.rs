//! Teacher-forced forward pass and backpropagation through time.

use ndarray::{s, Array1};
use serde::{Deserialize, Serialize};

use super::gru::GruStep;
use super::model::{softmax, Architecture, EncoderParams, GeneratorModel, PROB_FLOOR};
use super::tensor::outer_add;
use crate::corpus::{BOS, EOS};
use crate::{par, Error, Result};

/// One generator training sample as token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    /// Query ids in the encoder vocabulary.
    pub query: Vec<usize>,
    /// Retrieved reply ids in the encoder vocabulary (biseq2seq only).
    pub retrieved: Option<Vec<usize>>,
    /// Target reply in the decoder vocabulary, framed `BOS … EOS`.
    pub reply: Vec<usize>,
}

impl Triple {
    /// Number of predicted positions (everything after BOS).
    pub fn target_len(&self) -> usize {
        self.reply.len().saturating_sub(1)
    }

    pub fn validate(&self, model: &GeneratorModel) -> Result<()> {
        let dims = model.dims;
        let check_enc = |ids: &[usize], what: &str| {
            if ids.is_empty() {
                return Err(Error::invalid(format!("empty {what}")));
            }
            match ids.iter().find(|&&id| id >= dims.enc_vocab) {
                Some(bad) => Err(Error::invalid(format!("{what} id {bad} out of range"))),
                None => Ok(()),
            }
        };
        check_enc(&self.query, "query")?;
        match (model.arch, &self.retrieved) {
            (Architecture::BiSeq2Seq, Some(r)) => check_enc(r, "retrieved reply")?,
            (Architecture::BiSeq2Seq, None) => {
                return Err(Error::invalid("biseq2seq sample without a retrieved reply"))
            }
            (Architecture::Seq2Seq, _) => {}
        }
        if self.reply.len() < 2 || self.reply[0] != BOS || *self.reply.last().expect("len ≥ 2") != EOS {
            return Err(Error::invalid("target reply must be framed BOS … EOS"));
        }
        if let Some(bad) = self.reply.iter().find(|&&id| id >= dims.dec_vocab) {
            return Err(Error::invalid(format!("reply id {bad} out of range")));
        }
        Ok(())
    }
}

/// Loss of one sample plus per-position log-probabilities of the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub loss: f64,
    pub token_log_probs: Vec<f64>,
    /// Positions whose target probability fell below the floor.
    pub clamped: usize,
}

/// Loss totals for a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchStats {
    pub loss: f64,
    pub tokens: usize,
    pub samples: usize,
    pub clamped: usize,
}

impl BatchStats {
    fn merge(&mut self, other: BatchStats) {
        self.loss += other.loss;
        self.tokens += other.tokens;
        self.samples += other.samples;
        self.clamped += other.clamped;
    }

    pub fn mean_per_sample(&self) -> f64 {
        self.loss / self.samples.max(1) as f64
    }

    pub fn mean_per_token(&self) -> f64 {
        self.loss / self.tokens.max(1) as f64
    }
}

struct EncoderTrace {
    ids: Vec<usize>,
    steps: Vec<GruStep>,
}

struct SampleTrace {
    enc_q: EncoderTrace,
    enc_r: Option<EncoderTrace>,
    bridge_input: Array1<f64>,
    dec_inputs: Vec<usize>,
    dec_steps: Vec<GruStep>,
    probs: Vec<Array1<f64>>,
    targets: Vec<usize>,
    out: ForwardOutput,
}

fn encode_traced(enc: &EncoderParams, ids: &[usize]) -> EncoderTrace {
    let mut steps = Vec::with_capacity(ids.len());
    let mut h = Array1::zeros(enc.gru.hidden_dim());
    for &id in ids {
        let step = enc.gru.forward(enc.embedding.row(id), h.view());
        h = step.h.clone();
        steps.push(step);
    }
    EncoderTrace {
        ids: ids.to_vec(),
        steps,
    }
}

fn final_state(trace: &EncoderTrace) -> &Array1<f64> {
    &trace.steps.last().expect("encoder inputs are non-empty").h
}

/// Assumes `triple` has been validated against `model`.
fn forward_traced(model: &GeneratorModel, triple: &Triple) -> SampleTrace {
    let enc_q = encode_traced(&model.enc_q, &triple.query);
    let enc_r = match (&model.enc_r, &triple.retrieved) {
        (Some(enc), Some(ids)) => Some(encode_traced(enc, ids)),
        _ => None,
    };
    let bridge_input = model
        .bridge_input(final_state(&enc_q), enc_r.as_ref().map(final_state))
        .expect("validated sample");
    let mut h = model.bridge.w.dot(&bridge_input) + &model.bridge.b;

    let dec_inputs = triple.reply[..triple.reply.len() - 1].to_vec();
    let targets = triple.reply[1..].to_vec();
    let mut dec_steps = Vec::with_capacity(targets.len());
    let mut probs = Vec::with_capacity(targets.len());
    let mut token_log_probs = Vec::with_capacity(targets.len());
    let mut loss = 0.0;
    let mut clamped = 0;
    for (&input, &target) in dec_inputs.iter().zip(&targets) {
        let step = model.dec.gru.forward(model.dec.embedding.row(input), h.view());
        h = step.h.clone();
        let p = softmax(&model.logits(&h));
        let pt = p[target];
        if pt < PROB_FLOOR {
            clamped += 1;
        }
        let lp = pt.max(PROB_FLOOR).ln();
        loss -= lp;
        token_log_probs.push(lp);
        dec_steps.push(step);
        probs.push(p);
    }
    SampleTrace {
        enc_q,
        enc_r,
        bridge_input,
        dec_inputs,
        dec_steps,
        probs,
        targets,
        out: ForwardOutput {
            loss,
            token_log_probs,
            clamped,
        },
    }
}

fn backward_encoder(enc: &EncoderParams, trace: &EncoderTrace, dh_final: Array1<f64>, grad: &mut EncoderParams) {
    let mut dh = dh_final;
    for (step, &id) in trace.steps.iter().zip(&trace.ids).rev() {
        let (dx, dh_prev) = enc.gru.backward(step, &dh, &mut grad.gru);
        grad.embedding.row_mut(id).scaled_add(1.0, &dx);
        dh = dh_prev;
    }
}

fn backward_traced(model: &GeneratorModel, trace: &SampleTrace, grad: &mut GeneratorModel) {
    let h_dim = model.dims.hidden_dim;
    let mut dh_next = Array1::zeros(h_dim);
    for t in (0..trace.targets.len()).rev() {
        let mut dlogits = trace.probs[t].clone();
        dlogits[trace.targets[t]] -= 1.0;
        let step = &trace.dec_steps[t];
        outer_add(&mut grad.dec.w_out, &dlogits, &step.h);
        grad.dec.b_out += &dlogits;
        let dh = model.dec.w_out.t().dot(&dlogits) + &dh_next;
        let (dx, dh_prev) = model.dec.gru.backward(step, &dh, &mut grad.dec.gru);
        grad.dec.embedding.row_mut(trace.dec_inputs[t]).scaled_add(1.0, &dx);
        dh_next = dh_prev;
    }

    let dh0 = dh_next;
    outer_add(&mut grad.bridge.w, &dh0, &trace.bridge_input);
    grad.bridge.b += &dh0;
    let dctx = model.bridge.w.t().dot(&dh0);

    backward_encoder(
        &model.enc_q,
        &trace.enc_q,
        dctx.slice(s![..h_dim]).to_owned(),
        &mut grad.enc_q,
    );
    if let (Some(enc_r), Some(tr), Some(g)) = (&model.enc_r, &trace.enc_r, grad.enc_r.as_mut()) {
        backward_encoder(enc_r, tr, dctx.slice(s![h_dim..]).to_owned(), g);
    }
}

/// Teacher-forced loss of one sample: decoder input at step t is target
/// token t−1, starting from BOS; every target after BOS, EOS included,
/// contributes.
pub fn forward_loss(model: &GeneratorModel, triple: &Triple) -> Result<ForwardOutput> {
    triple.validate(model)?;
    Ok(forward_traced(model, triple).out)
}

/// Summed loss over `triples` without gradients.
pub fn batch_loss(model: &GeneratorModel, triples: &[Triple]) -> Result<BatchStats> {
    for t in triples {
        t.validate(model)?;
    }
    Ok(par::chunked_fold(
        triples,
        BatchStats::default,
        |acc, t| {
            let out = forward_traced(model, t).out;
            acc.merge(BatchStats {
                loss: out.loss,
                tokens: t.target_len(),
                samples: 1,
                clamped: out.clamped,
            });
        },
        |a, b| a.merge(b),
    )
    .unwrap_or_default())
}

/// Exact gradient of the summed batch loss with respect to every parameter.
pub fn backward(model: &GeneratorModel, triples: &[Triple]) -> Result<(GeneratorModel, BatchStats)> {
    for t in triples {
        t.validate(model)?;
    }
    Ok(backward_unchecked(model, triples))
}

pub(crate) fn backward_unchecked(model: &GeneratorModel, triples: &[Triple]) -> (GeneratorModel, BatchStats) {
    par::chunked_fold(
        triples,
        || (model.zeros_like(), BatchStats::default()),
        |(grad, stats), t| {
            let trace = forward_traced(model, t);
            backward_traced(model, &trace, grad);
            stats.merge(BatchStats {
                loss: trace.out.loss,
                tokens: t.target_len(),
                samples: 1,
                clamped: trace.out.clamped,
            });
        },
        |(ga, sa), (gb, sb)| {
            ga.add_assign(&gb);
            sa.merge(sb);
        },
    )
    .unwrap_or_else(|| (model.zeros_like(), BatchStats::default()))
}
