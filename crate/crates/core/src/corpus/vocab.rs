use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{QueryReplyPair, TokenSeq};
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED_COUNT: usize = 4;
pub const RESERVED: [&str; RESERVED_COUNT] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Surface form used when decoding the UNK id.
pub const UNK_SURFACE: &str = "⟨unk⟩";

const VOCAB_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Query,
    Reply,
    Both,
}

/// Token ↔ id mapping with four reserved ids in front of the corpus tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    reserved: Vec<String>,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from already-ranked corpus tokens.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = HashMap::new();
        let mut list = Vec::new();
        for tok in tokens {
            let tok = tok.into();
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("malformed vocabulary token {tok:?}")));
            }
            if index.insert(tok.clone(), RESERVED_COUNT + list.len()).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {tok:?}")));
            }
            list.push(tok);
        }
        Ok(Vocabulary { tokens: list, index })
    }

    /// Total id count, reserved ids included.
    pub fn size(&self) -> usize {
        RESERVED_COUNT + self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    /// Surface form of a non-reserved id.
    pub fn token(&self, id: usize) -> Option<&str> {
        id.checked_sub(RESERVED_COUNT)
            .and_then(|i| self.tokens.get(i))
            .map(String::as_str)
    }

    /// Corpus tokens in id order.
    pub fn corpus_tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, seq: &TokenSeq, add_bos_eos: bool) -> Vec<usize> {
        let mut out = Vec::with_capacity(seq.len() + 2);
        if add_bos_eos {
            out.push(BOS);
        }
        out.extend(seq.iter().map(|t| self.id_or_unk(t)));
        if add_bos_eos {
            out.push(EOS);
        }
        out
    }

    /// Drops PAD/BOS/EOS and renders UNK as [`UNK_SURFACE`].
    pub fn decode_ids(&self, ids: &[usize]) -> Result<TokenSeq> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            match id {
                PAD | BOS | EOS => {}
                UNK => out.push(UNK_SURFACE.to_owned()),
                _ => match self.token(id) {
                    Some(t) => out.push(t.to_owned()),
                    None => {
                        return Err(Error::invalid(format!(
                            "token id {id} out of range for vocabulary of size {}",
                            self.size()
                        )))
                    }
                },
            }
        }
        TokenSeq::new(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = VocabFile {
            version: VOCAB_VERSION,
            reserved: RESERVED.iter().map(|s| s.to_string()).collect(),
            tokens: self.tokens.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        if file.version != VOCAB_VERSION {
            return Err(Error::artifact(
                "vocabulary",
                format!("unsupported version {}", file.version),
            ));
        }
        if file.reserved != RESERVED {
            return Err(Error::artifact("vocabulary", "unexpected reserved token list"));
        }
        Vocabulary::from_tokens(file.tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_json(&text)
            .map_err(|e| Error::artifact(path.display().to_string(), e))
    }
}

/// Ranks tokens by descending count (lexicographic on ties), drops tokens
/// below `min_count` and keeps at most `max_size - 4` of them.
pub fn build_vocabulary(
    pairs: &[QueryReplyPair],
    side: Side,
    max_size: usize,
    min_count: usize,
) -> Result<Vocabulary> {
    if pairs.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from zero pairs"));
    }
    if max_size <= RESERVED_COUNT {
        return Err(Error::invalid(format!(
            "max_size must be at least {}, got {max_size}",
            RESERVED_COUNT + 1
        )));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for pair in pairs {
        let sides: &[&TokenSeq] = match side {
            Side::Query => &[&pair.query],
            Side::Reply => &[&pair.reply],
            Side::Both => &[&pair.query, &pair.reply],
        };
        for seq in sides {
            for tok in seq.iter() {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    // BTreeMap iteration is already lexicographic, so a stable sort on count
    // keeps the tie-break.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.truncate(max_size - RESERVED_COUNT);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t))
}
