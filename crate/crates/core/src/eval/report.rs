use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bleu::{bleu_detail, MAX_ORDER};
use super::unigram::{corpus_entropy, mean_length, EntropyDenominator, UnigramModel};
use crate::corpus::TokenSeq;
use crate::ensemble::{selection_proportions, Ensemble, Mode, Provenance, SelectionStats};
use crate::{par, Result};

pub const REPORT_VERSION: u32 = 1;

/// Anything that maps a tokenized query to a reply. Systems under test read
/// only `case.query`; the reference is visible so oracle fixtures can be
/// expressed as systems too.
pub trait DialogSystem: Sync {
    fn name(&self) -> &str;
    fn respond(&self, case: &TestCase) -> Result<SystemReply>;
    /// Whether selection proportions are meaningful for this system.
    fn reports_selection(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemReply {
    pub reply: TokenSeq,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub query: TokenSeq,
    pub reference: TokenSeq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub entropy: EntropyDenominator,
    /// How many per-query samples to keep in the report.
    pub samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            entropy: EntropyDenominator::PerToken,
            samples: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub query: String,
    pub reference: String,
    pub reply: String,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub query_index: usize,
    pub error: String,
}

/// Metrics for one system. Metric fields are absent when every query
/// failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub name: String,
    pub n_queries: usize,
    pub n_scored: usize,
    /// Cumulative BLEU-1..4, 0..100.
    pub bleu: Option<[f64; MAX_ORDER]>,
    /// Single-order BLEU-1..4, 0..100.
    pub bleu_individual: Option<[f64; MAX_ORDER]>,
    /// Nats.
    pub entropy: Option<f64>,
    pub mean_length: Option<f64>,
    pub selection: Option<SelectionStats>,
    pub failures: Vec<Failure>,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub entropy: Option<f64>,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub n_test: usize,
    pub entropy_denominator: EntropyDenominator,
    pub unigram_alpha: f64,
    pub unigram_support: usize,
    /// Entropy and length of the reference replies themselves.
    pub reference: ReferenceStats,
    pub systems: Vec<SystemReport>,
}

fn to_array(v: &[f64]) -> [f64; MAX_ORDER] {
    let mut out = [0.0; MAX_ORDER];
    out.copy_from_slice(&v[..MAX_ORDER]);
    out
}

fn evaluate_one(
    system: &dyn DialogSystem,
    cases: &[TestCase],
    unigram: &UnigramModel,
    config: &EvalConfig,
) -> Result<SystemReport> {
    let results = par::map(cases, |c| system.respond(c));
    let mut failures = Vec::new();
    let mut replies = Vec::new();
    let mut references = Vec::new();
    let mut provenances = Vec::new();
    let mut samples = Vec::new();
    for (i, (case, result)) in cases.iter().zip(results).enumerate() {
        match result {
            Ok(r) => {
                if samples.len() < config.samples {
                    samples.push(Sample {
                        query: case.query.to_string(),
                        reference: case.reference.to_string(),
                        reply: r.reply.to_string(),
                        provenance: r.provenance,
                    });
                }
                replies.push(r.reply);
                references.push(case.reference.clone());
                provenances.push(r.provenance);
            }
            Err(e) => failures.push(Failure {
                query_index: i,
                error: e.to_string(),
            }),
        }
    }
    let n_scored = replies.len();
    let (bleu, bleu_individual, entropy, length) = if n_scored == 0 {
        (None, None, None, None)
    } else {
        let b = bleu_detail(&replies, &references, MAX_ORDER)?;
        (
            Some(to_array(&b.cumulative)),
            Some(to_array(&b.individual)),
            corpus_entropy(&replies, unigram, config.entropy).ok(),
            Some(mean_length(&replies)?),
        )
    };
    let selection = if system.reports_selection() {
        selection_proportions(provenances.iter().flatten().copied()).ok()
    } else {
        None
    };
    Ok(SystemReport {
        name: system.name().to_owned(),
        n_queries: cases.len(),
        n_scored,
        bleu,
        bleu_individual,
        entropy,
        mean_length: length,
        selection,
        failures,
        samples,
    })
}

/// Runs every system over every test query and computes all metrics.
/// Per-query failures are recorded and excluded from the metrics.
pub fn evaluate_systems(
    cases: &[TestCase],
    systems: &[&dyn DialogSystem],
    unigram: &UnigramModel,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if cases.is_empty() {
        return Err(crate::Error::invalid("evaluation needs at least one test case"));
    }
    let references: Vec<&TokenSeq> = cases.iter().map(|c| &c.reference).collect();
    let reference = ReferenceStats {
        entropy: corpus_entropy(references.iter().copied(), unigram, config.entropy).ok(),
        mean_length: mean_length(references.iter().copied())?,
    };
    let systems = systems
        .iter()
        .map(|s| evaluate_one(*s, cases, unigram, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        version: REPORT_VERSION,
        n_test: cases.len(),
        entropy_denominator: config.entropy,
        unigram_alpha: unigram.alpha(),
        unigram_support: unigram.support_size(),
        reference,
        systems,
    })
}

fn cell(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.prec$}"))
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let header = [
            "system", "n", "fail", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ind-2", "ind-3", "ind-4", "entropy",
            "length", "retr%", "gen%",
        ];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for s in &self.systems {
            let b = |i: usize| cell(s.bleu.map(|b| b[i]), 2);
            let ind = |i: usize| cell(s.bleu_individual.map(|b| b[i]), 2);
            rows.push(vec![
                s.name.clone(),
                s.n_scored.to_string(),
                s.failures.len().to_string(),
                b(0),
                b(1),
                b(2),
                b(3),
                ind(1),
                ind(2),
                ind(3),
                cell(s.entropy, 3),
                cell(s.mean_length, 2),
                cell(s.selection.map(|x| 100.0 * x.retrieved), 2),
                cell(s.selection.map(|x| 100.0 * x.generated), 2),
            ]);
        }
        let mut reference = vec!["reference".to_owned(), self.n_test.to_string(), "0".to_owned()];
        reference.extend(std::iter::repeat_n("-".to_owned(), 7));
        reference.push(cell(self.reference.entropy, 3));
        reference.push(cell(Some(self.reference.mean_length), 2));
        reference.extend(["-".to_owned(), "-".to_owned()]);
        rows.push(reference);

        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, &w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        out
    }
}

/// Returns the reference reply; an upper-bound fixture.
pub struct EchoSystem;

impl DialogSystem for EchoSystem {
    fn name(&self) -> &str {
        "echo"
    }

    fn respond(&self, case: &TestCase) -> Result<SystemReply> {
        Ok(SystemReply {
            reply: case.reference.clone(),
            provenance: None,
        })
    }
}

/// An [`Ensemble`] evaluated in a fixed mode.
pub struct EnsembleSystem {
    pub name: String,
    pub ensemble: Ensemble,
    pub mode: Mode,
}

impl DialogSystem for EnsembleSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn respond(&self, case: &TestCase) -> Result<SystemReply> {
        let r = self
            .ensemble
            .respond_tokens(&case.query, self.mode, self.ensemble.config().decode)?;
        Ok(SystemReply {
            reply: r.reply,
            provenance: Some(r.provenance),
        })
    }

    fn reports_selection(&self) -> bool {
        self.mode == Mode::Ensemble
    }
}
