//! Retrieval/generation dialog ensemble.
//!
//! A user query is answered by two systems at once: an inverted-index
//! retriever with a logistic matcher returns a stored reply, and a GRU
//! encoder-decoder conditioned on both the query and that retrieved reply
//! synthesizes a new one. The matcher then scores both candidates against
//! the query and the higher-scoring reply wins.
//!
//! Module map:
//!
//! - [`corpus`]: tokenization, vocabularies, pair files and dataset splits.
//! - [`index`]: inverted index and coarse idf-sum retrieval.
//! - [`matcher`]: q/q*/r* features and the logistic relevance scorer.
//! - [`neural`]: GRU seq2seq / biseq2seq models, backprop, AdaDelta, decoding.
//! - [`ensemble`]: the retrieve → generate → rerank pipeline.
//! - [`eval`]: BLEU, unigram entropy, reply length and multi-system reports.
//!
//! Batch-level work (gradient accumulation, dataset loss, candidate
//! scoring, evaluation sweeps) goes through [`par`], which uses rayon when
//! the `parallel` feature is enabled and plain iterators otherwise. Both
//! paths produce bit-identical results.

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod index;
pub mod matcher;
pub mod neural;
pub mod par;

pub use error::{Error, Result};
