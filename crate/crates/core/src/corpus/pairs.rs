use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize_with, QueryReplyPair, TokenSeq, TokenizerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// `query<TAB>reply` per line.
    Tsv,
    /// `{"q": "...", "r": "..."}` per line.
    Jsonl,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub tokenizer: TokenizerConfig,
    /// Records whose query or reply has fewer tokens are dropped.
    pub min_tokens: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            tokenizer: TokenizerConfig::default(),
            min_tokens: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedPairs {
    pub pairs: Vec<QueryReplyPair>,
    pub dropped: usize,
}

#[derive(Deserialize)]
struct JsonRecord {
    q: String,
    r: String,
}

pub fn load_pairs(path: &Path, format: CorpusFormat) -> Result<LoadedPairs> {
    load_pairs_with(path, format, LoadOptions::default())
}

pub fn load_pairs_with(path: &Path, format: CorpusFormat, opts: LoadOptions) -> Result<LoadedPairs> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, path, format, opts)
}

fn parse_pairs(text: &str, path: &Path, format: CorpusFormat, opts: LoadOptions) -> Result<LoadedPairs> {
    let min = opts.min_tokens.max(1);
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let (q, r) = match format {
            CorpusFormat::Tsv => {
                let mut fields = line.split('\t');
                match (fields.next(), fields.next(), fields.next()) {
                    (Some(q), Some(r), None) => (q.to_owned(), r.to_owned()),
                    (_, None, _) => return Err(err("expected `query<TAB>reply`, found no tab".into())),
                    _ => return Err(err("expected exactly one tab".into())),
                }
            }
            CorpusFormat::Jsonl => {
                let rec: JsonRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
                (rec.q, rec.r)
            }
        };
        let query = tokenize_with(&q, opts.tokenizer);
        let reply = tokenize_with(&r, opts.tokenizer);
        if query.len() < min || reply.len() < min {
            dropped += 1;
            continue;
        }
        pairs.push(QueryReplyPair {
            id: pairs.len(),
            query,
            reply,
        });
    }
    Ok(LoadedPairs { pairs, dropped })
}

/// Writes pairs as TSV, one record per line, tokens joined by single spaces.
pub fn write_pairs_tsv(path: &Path, pairs: &[QueryReplyPair]) -> Result<()> {
    let mut out = Vec::new();
    for p in pairs {
        writeln!(out, "{}\t{}", p.query, p.reply).expect("write to Vec");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

impl QueryReplyPair {
    pub fn from_text(id: usize, query: &str, reply: &str) -> Self {
        QueryReplyPair {
            id,
            query: TokenSeq::from_whitespace(query),
            reply: TokenSeq::from_whitespace(reply),
        }
    }
}
