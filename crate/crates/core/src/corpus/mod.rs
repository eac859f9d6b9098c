//! Corpus ingestion: tokenization, query-reply pairs, vocabularies and
//! deterministic dataset splits.

mod pairs;
mod split;
pub mod synthetic;
mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub use pairs::{load_pairs, load_pairs_with, write_pairs_tsv, CorpusFormat, LoadOptions, LoadedPairs};
pub use split::{split_dataset, DatasetSplit};
pub use vocab::{
    build_vocabulary, Side, Vocabulary, BOS, EOS, PAD, RESERVED, RESERVED_COUNT, UNK,
    UNK_SURFACE,
};

/// A tokenized utterance. Tokens are non-empty and contain no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> crate::Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(crate::Error::invalid(format!("malformed token {bad:?}")));
        }
        Ok(TokenSeq(tokens))
    }

    /// Builds a sequence by splitting `text` on whitespace, without any
    /// normalization.
    pub fn from_whitespace(text: &str) -> Self {
        TokenSeq(text.split_whitespace().map(str::to_owned).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// One ⟨query, reply⟩ unit of a corpus. Ids are dense from 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryReplyPair {
    pub id: usize,
    pub query: TokenSeq,
    pub reply: TokenSeq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { lowercase: true }
    }
}

/// NFC-normalizes, optionally lowercases, and splits on whitespace runs.
pub fn tokenize_with(text: &str, config: TokenizerConfig) -> TokenSeq {
    let composed: String = text.nfc().collect();
    let folded = if config.lowercase {
        composed.to_lowercase()
    } else {
        composed
    };
    TokenSeq::from_whitespace(&folded)
}

pub fn tokenize(text: &str) -> TokenSeq {
    tokenize_with(text, TokenizerConfig::default())
}
