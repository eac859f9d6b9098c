//! Inverted index over pair queries and coarse candidate retrieval.
//!
//! The coarse score of a pair is the sum of smoothed idf over the distinct
//! non-stopword query terms it shares with the input, so rare shared words
//! dominate frequent ones. Pairs sharing nothing are never returned.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{QueryReplyPair, TokenSeq};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 1000;
pub const DEFAULT_STOPWORD_COUNT: usize = 25;
const INDEX_VERSION: u32 = 1;

/// Sparse term → weight map.
pub type SparseVector = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<usize>>,
    n_docs: usize,
    stopwords: BTreeSet<String>,
}

/// Coarse candidates, sorted by score descending then pair id ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    pub entries: Vec<(usize, f64)>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(id, _)| id)
    }
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    version: u32,
    n_docs: usize,
    stopwords: Vec<String>,
    n_terms: usize,
}

/// Distinct terms of `seq` that are not stopwords, in sorted order.
fn distinct_terms<'a>(seq: &'a TokenSeq, stopwords: &BTreeSet<String>) -> BTreeSet<&'a str> {
    seq.iter().filter(|t| !stopwords.contains(*t)).collect()
}

/// The `count` most frequent query terms by document frequency,
/// lexicographic on ties.
pub fn top_df_stopwords(pairs: &[QueryReplyPair], count: usize) -> BTreeSet<String> {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pairs {
        for t in p.query.iter().collect::<BTreeSet<_>>() {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.into_iter().take(count).map(|(t, _)| t.to_owned()).collect()
}

/// Reads a stopword file: one term per line, blank lines ignored.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

impl InvertedIndex {
    /// Indexes the query side of `pairs`. Pair ids must be dense from 0.
    pub fn build(pairs: &[QueryReplyPair], stopwords: BTreeSet<String>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("cannot index zero pairs"));
        }
        let mut postings: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (pos, pair) in pairs.iter().enumerate() {
            if pair.id != pos {
                return Err(Error::invalid(format!(
                    "pair ids must be dense from 0; found id {} at position {pos}",
                    pair.id
                )));
            }
            for term in distinct_terms(&pair.query, &stopwords) {
                postings.entry(term.to_owned()).or_default().push(pair.id);
            }
        }
        Ok(InvertedIndex {
            postings,
            n_docs: pairs.len(),
            stopwords,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn postings(&self, term: &str) -> &[usize] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn n_terms(&self) -> usize {
        self.postings.len()
    }

    /// `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs as f64;
        ((1.0 + n) / (1.0 + self.df(term) as f64)).ln() + 1.0
    }

    /// Top-`k` pairs by idf-sum over shared distinct terms.
    pub fn coarse_retrieve(&self, query: &TokenSeq, k: usize) -> CandidateSet {
        let k = k.max(1);
        // Terms are visited in sorted order so every pair accumulates its
        // score in the same order regardless of posting layout.
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in distinct_terms(query, &self.stopwords) {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let w = self.idf(term);
            for &id in list {
                *scores.entry(id).or_insert(0.0) += w;
            }
        }
        let mut entries: Vec<(usize, f64)> = scores.into_iter().collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        entries.truncate(k);
        CandidateSet { entries }
    }

    /// Term frequency × idf, stopwords excluded.
    pub fn tfidf_vector(&self, seq: &TokenSeq) -> SparseVector {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in seq.iter().filter(|t| !self.stopwords.contains(*t)) {
            *tf.entry(t.to_owned()).or_default() += 1.0;
        }
        for (t, w) in tf.iter_mut() {
            *w *= self.idf(t);
        }
        tf
    }

    /// Serializes as one JSON header line followed by one line per term in
    /// byte order: `term<TAB>id id id`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = IndexHeader {
            version: INDEX_VERSION,
            n_docs: self.n_docs,
            stopwords: self.stopwords.iter().cloned().collect(),
            n_terms: self.postings.len(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for (term, ids) in &self.postings {
            out.extend_from_slice(term.as_bytes());
            out.push(b'\t');
            let joined: Vec<String> = ids.iter().map(usize::to_string).collect();
            out.extend_from_slice(joined.join(" ").as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let (_, head) = lines.next().ok_or_else(|| parse_err(1, "empty index file".into()))?;
        let header: IndexHeader =
            serde_json::from_str(head).map_err(|e| parse_err(1, e.to_string()))?;
        if header.version != INDEX_VERSION {
            return Err(Error::artifact(
                origin.display().to_string(),
                format!("unsupported index version {}", header.version),
            ));
        }
        let stopwords: BTreeSet<String> = header.stopwords.into_iter().collect();
        let mut postings = BTreeMap::new();
        let mut last: Option<String> = None;
        for (i, line) in lines {
            let lineno = i + 1;
            let (term, ids) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(lineno, "missing tab".into()))?;
            if last.as_deref().is_some_and(|prev| prev >= term) {
                return Err(parse_err(lineno, "terms out of order".into()));
            }
            if stopwords.contains(term) {
                return Err(parse_err(lineno, format!("stopword {term:?} has postings")));
            }
            let ids = ids
                .split(' ')
                .map(|s| {
                    s.parse::<usize>()
                        .ok()
                        .filter(|&id| id < header.n_docs)
                        .ok_or_else(|| parse_err(lineno, format!("bad pair id {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(parse_err(lineno, "posting list not strictly increasing".into()));
            }
            last = Some(term.to_owned());
            postings.insert(term.to_owned(), ids);
        }
        if postings.len() != header.n_terms {
            return Err(parse_err(0, format!(
                "header declares {} terms, found {}",
                header.n_terms,
                postings.len()
            )));
        }
        Ok(InvertedIndex {
            postings,
            n_docs: header.n_docs,
            stopwords,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Cosine similarity of two sparse vectors; 0 when either is zero.
pub fn sparse_cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(t, x)| b.get(t).map(|y| x * y))
        .sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pairs(queries: &[&str]) -> Vec<QueryReplyPair> {
        queries
            .iter()
            .enumerate()
            .map(|(i, q)| QueryReplyPair::from_text(i, q, "r"))
            .collect()
    }

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn build_examples() {
        let idx = InvertedIndex::build(&pairs(&["a b", "b c"]), BTreeSet::new()).unwrap();
        assert_eq!(idx.postings("a"), [0]);
        assert_eq!(idx.postings("b"), [0, 1]);
        assert_eq!(idx.postings("c"), [1]);
        assert_eq!(idx.df("b"), 2);

        let idx = InvertedIndex::build(&pairs(&["a b", "b c"]), set(&["b"])).unwrap();
        assert!(idx.postings("b").is_empty());
        assert_eq!(idx.n_terms(), 2);

        let idx = InvertedIndex::build(&pairs(&["a a a"]), BTreeSet::new()).unwrap();
        assert_eq!(idx.postings("a"), [0]);
        assert!(InvertedIndex::build(&[], BTreeSet::new()).is_err());
    }

    #[test]
    fn idf_values() {
        let one = InvertedIndex::build(&pairs(&["a"]), BTreeSet::new()).unwrap();
        assert_abs_diff_eq!(one.idf("a"), 1.0, epsilon = 1e-15);
        let three = InvertedIndex::build(&pairs(&["a", "b", "c"]), BTreeSet::new()).unwrap();
        assert_abs_diff_eq!(three.idf("a"), 1.693_147_180_559_945_3, epsilon = 1e-12);
        assert_abs_diff_eq!(three.idf("zz"), 2.386_294_361_119_890_6, epsilon = 1e-12);
        assert!(three.idf("zz") > three.idf("a"));
    }

    #[test]
    fn retrieve_basics() {
        let idx = InvertedIndex::build(&pairs(&["x y", "alpha beta", "x z", "y z"]), BTreeSet::new()).unwrap();
        let got = idx.coarse_retrieve(&TokenSeq::from_whitespace("alpha beta"), 10);
        assert_eq!(got.entries[0].0, 1);
        assert_eq!(got.len(), 1);
        assert!(idx.coarse_retrieve(&TokenSeq::from_whitespace("nothing"), 10).is_empty());
        assert_eq!(idx.coarse_retrieve(&TokenSeq::from_whitespace("x y z"), 1).len(), 1);
        // x,y,z all df=2: three pairs tie on 2 shared terms, ordered by id.
        let tied = idx.coarse_retrieve(&TokenSeq::from_whitespace("x y z"), 10);
        assert_eq!(tied.ids().collect::<Vec<_>>(), [0, 2, 3]);
    }

    #[test]
    fn stopword_only_query_is_empty() {
        let idx = InvertedIndex::build(&pairs(&["the cat", "the dog"]), set(&["the"])).unwrap();
        assert!(idx.coarse_retrieve(&TokenSeq::from_whitespace("the the"), 5).is_empty());
    }

    #[test]
    fn tfidf_examples() {
        let idx = InvertedIndex::build(&pairs(&["a"]), set(&["s"])).unwrap();
        let v = idx.tfidf_vector(&TokenSeq::from_whitespace("a a"));
        assert_abs_diff_eq!(v["a"], 2.0, epsilon = 1e-15);
        assert!(idx.tfidf_vector(&TokenSeq::from_whitespace("s s")).is_empty());
        assert_abs_diff_eq!(sparse_cosine(&v, &v), 1.0, epsilon = 1e-12);
        assert_eq!(sparse_cosine(&v, &SparseVector::new()), 0.0);
    }

    #[test]
    fn top_df_stopwords_ranks_by_document_frequency() {
        let p = pairs(&["the a the", "the b", "c b"]);
        assert_eq!(top_df_stopwords(&p, 2), set(&["b", "the"]));
        assert_eq!(top_df_stopwords(&p, 1), set(&["b"]));
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let idx = InvertedIndex::build(&pairs(&["b a", "c b", "z"]), set(&["z"])).unwrap();
        let bytes = idx.to_bytes();
        let back = InvertedIndex::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes(), bytes);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("a\t0"));
    }

    #[test]
    fn load_rejects_corruption() {
        let idx = InvertedIndex::build(&pairs(&["a b", "b c"]), BTreeSet::new()).unwrap();
        let text = String::from_utf8(idx.to_bytes()).unwrap();
        let bad = text.replace("b\t0 1", "b\t0 9");
        assert!(InvertedIndex::from_bytes(bad.as_bytes(), Path::new("mem")).is_err());
    }
}
