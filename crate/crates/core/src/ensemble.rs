//! Retrieve → generate → rerank.
//!
//! A query is answered by the retrieval pipeline (coarse index lookup plus
//! matcher ranking) and by the generator conditioned on the retrieved reply.
//! The matcher's q–r scorer then picks one of the two candidates.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_pairs_with, tokenize_with, CorpusFormat, LoadOptions, QueryReplyPair, TokenSeq, TokenizerConfig, Vocabulary,
    UNK_SURFACE,
};
use crate::index::{InvertedIndex, DEFAULT_K};
use crate::matcher::{extract_features, rank_candidates, EmbeddingSource, EmbeddingTable, MatcherModel};
use crate::neural::{generate, Architecture, DecodeConfig, Generator, Triple};
use crate::{Error, Result};

pub const DEFAULT_APOLOGY: &str = "sorry , i do not know how to answer that .";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Ensemble,
    RetrievalOnly,
    GenerationOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ensemble => "ensemble",
            Mode::RetrievalOnly => "retrieval_only",
            Mode::GenerationOnly => "generation_only",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ensemble" => Ok(Mode::Ensemble),
            "retrieval_only" => Ok(Mode::RetrievalOnly),
            "generation_only" => Ok(Mode::GenerationOnly),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Retrieved,
    Generated,
    /// The configured apology; no candidate was available.
    Fallback,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Retrieved => "retrieved",
            Provenance::Generated => "generated",
            Provenance::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub reply: TokenSeq,
    pub provenance: Provenance,
    /// Database pair the reply came from (retrieved candidates only).
    pub source_pair_id: Option<usize>,
    pub score: Option<f64>,
}

impl Candidate {
    pub fn retrieved(reply: TokenSeq, pair_id: usize) -> Self {
        Candidate {
            reply,
            provenance: Provenance::Retrieved,
            source_pair_id: Some(pair_id),
            score: None,
        }
    }

    pub fn generated(reply: TokenSeq) -> Self {
        Candidate {
            reply,
            provenance: Provenance::Generated,
            source_pair_id: None,
            score: None,
        }
    }

    /// Empty or all-UNK replies carry nothing worth ranking.
    pub fn is_degenerate(&self) -> bool {
        self.reply.iter().all(|t| t == UNK_SURFACE)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub retrieve_ms: f64,
    pub generate_ms: f64,
    pub rerank_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub reply: TokenSeq,
    pub provenance: Provenance,
    /// Everything presented to the reranker, scored, in presentation
    /// order (retrieved first). Empty for a fallback.
    pub candidates: Vec<Candidate>,
    pub timings: Timings,
}

impl ChatResponse {
    fn fallback(apology: &str) -> Self {
        ChatResponse {
            reply: TokenSeq::from_whitespace(apology),
            provenance: Provenance::Fallback,
            candidates: Vec::new(),
            timings: Timings::default(),
        }
    }

    /// The response with timing fields zeroed, for determinism checks.
    pub fn without_timings(&self) -> Self {
        ChatResponse {
            timings: Timings::default(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub pairs: PathBuf,
    pub index: PathBuf,
    pub matcher: PathBuf,
    /// Generator checkpoint manifest; it references its own vocabularies.
    pub generator: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub mode: Mode,
    pub k: usize,
    pub decode: DecodeConfig,
    pub apology: String,
    pub lowercase: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            mode: Mode::Ensemble,
            k: DEFAULT_K,
            decode: DecodeConfig::default(),
            apology: DEFAULT_APOLOGY.to_owned(),
            lowercase: true,
        }
    }
}

/// Loaded, read-only artifacts.
#[derive(Debug)]
pub struct Artifacts {
    pub pairs: Vec<QueryReplyPair>,
    pub index: InvertedIndex,
    pub matcher: MatcherModel,
    pub generator: Option<Generator>,
    pub embeddings: Option<EmbeddingTable>,
}

fn named<T>(name: &str, path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::artifact(name, format!("{}: {e}", path.display())))
}

impl Artifacts {
    pub fn new(
        pairs: Vec<QueryReplyPair>,
        index: InvertedIndex,
        matcher: MatcherModel,
        generator: Option<Generator>,
        embeddings: Option<EmbeddingTable>,
    ) -> Result<Self> {
        if index.n_docs() != pairs.len() {
            return Err(Error::artifact(
                "index",
                format!("covers {} pairs but the database has {}", index.n_docs(), pairs.len()),
            ));
        }
        if matches!(matcher.metadata.embeddings, EmbeddingSource::Generator { .. }) && embeddings.is_none() {
            return Err(Error::artifact("matcher", "trained with embeddings that were not supplied"));
        }
        Ok(Artifacts {
            pairs,
            index,
            matcher,
            generator,
            embeddings,
        })
    }

    /// Loads everything, naming the failing artifact in errors. Matcher
    /// embeddings are taken from the generator checkpoint the matcher names,
    /// resolved relative to the matcher file.
    pub fn load(paths: &ArtifactPaths, tokenizer: TokenizerConfig) -> Result<Self> {
        let opts = LoadOptions {
            tokenizer,
            ..LoadOptions::default()
        };
        let format = CorpusFormat::from_path(&paths.pairs);
        let pairs = named("pairs", &paths.pairs, load_pairs_with(&paths.pairs, format, opts))?.pairs;
        let index = named("index", &paths.index, InvertedIndex::load(&paths.index))?;
        let matcher = named("matcher", &paths.matcher, MatcherModel::load(&paths.matcher))?;
        let generator = match &paths.generator {
            Some(p) => Some(named("generator", p, Generator::load(p))?),
            None => None,
        };
        let embeddings = match &matcher.metadata.embeddings {
            EmbeddingSource::None => None,
            EmbeddingSource::Generator { manifest } => {
                let path = paths
                    .matcher
                    .parent()
                    .unwrap_or_else(|| Path::new(""))
                    .join(manifest);
                let g = named("matcher embeddings", &path, Generator::load(&path))?;
                Some(generator_embeddings(&g)?)
            }
        };
        Artifacts::new(pairs, index, matcher, generator, embeddings)
    }
}

/// The query encoder's embedding table, usable as matcher embeddings.
pub fn generator_embeddings(g: &Generator) -> Result<EmbeddingTable> {
    EmbeddingTable::new(g.enc_vocab.clone(), g.model.enc_q.embedding.clone())
}

/// Coarse retrieval followed by matcher ranking.
pub fn retrieve_best(
    q: &TokenSeq,
    index: &InvertedIndex,
    pairs: &[QueryReplyPair],
    matcher: &MatcherModel,
    embeddings: Option<&EmbeddingTable>,
    k: usize,
) -> Option<Candidate> {
    let coarse = index.coarse_retrieve(q, k);
    let best = rank_candidates(q, &coarse, pairs, matcher, index, embeddings)?;
    let mut c = Candidate::retrieved(pairs[best.pair_id].reply.clone(), best.pair_id);
    c.score = Some(best.score);
    Some(c)
}

/// Result of reranking: scored candidates and the winner's position.
#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    pub candidates: Vec<Candidate>,
    pub chosen: usize,
}

impl Reranked {
    pub fn winner(&self) -> &Candidate {
        &self.candidates[self.chosen]
    }
}

/// Scores the candidates with the q–r scorer and picks the higher one.
/// The retrieved candidate is scored with its q* (`retrieved.1`), the
/// generated one without. Degenerate generated replies are dropped first;
/// on an exact tie the retrieved candidate wins.
pub fn post_rerank(
    q: &TokenSeq,
    retrieved: Option<(Candidate, &TokenSeq)>,
    generated: Option<Candidate>,
    matcher: &MatcherModel,
    index: &InvertedIndex,
    embeddings: Option<&EmbeddingTable>,
) -> Result<Reranked> {
    let generated = generated.filter(|g| !g.is_degenerate());
    let mut candidates = Vec::with_capacity(2);
    if let Some((mut c, q_star)) = retrieved {
        let f = extract_features(q, Some(q_star), &c.reply, index, embeddings);
        c.score = Some(matcher.score(&f));
        candidates.push(c);
    }
    if let Some(mut c) = generated {
        let f = extract_features(q, None, &c.reply, index, embeddings);
        c.score = Some(matcher.score(&f));
        candidates.push(c);
    }
    let chosen = match candidates.as_slice() {
        [] => return Err(Error::invalid("no candidate to rerank")),
        [_] => 0,
        [a, b] => usize::from(b.score > a.score),
        _ => unreachable!(),
    };
    Ok(Reranked { candidates, chosen })
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// A configured ensemble over shared artifacts. Cheap to clone; safe to
/// call from many threads.
#[derive(Debug, Clone)]
pub struct Ensemble {
    artifacts: Arc<Artifacts>,
    config: EnsembleConfig,
}

impl Ensemble {
    pub fn new(artifacts: Arc<Artifacts>, config: EnsembleConfig) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if config.decode.max_len == 0 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        if config.mode != Mode::RetrievalOnly && artifacts.generator.is_none() {
            return Err(Error::artifact(
                "generator",
                format!("required by mode {}", config.mode),
            ));
        }
        Ok(Ensemble { artifacts, config })
    }

    pub fn artifacts(&self) -> &Arc<Artifacts> {
        &self.artifacts
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn tokenize(&self, query: &str) -> TokenSeq {
        tokenize_with(query, TokenizerConfig { lowercase: self.config.lowercase })
    }

    pub fn respond(&self, query: &str) -> Result<ChatResponse> {
        self.respond_with(query, self.config.mode, self.config.decode)
    }

    /// Answers one query with an explicit mode and decode configuration.
    pub fn respond_with(&self, query: &str, mode: Mode, decode: DecodeConfig) -> Result<ChatResponse> {
        let q = self.tokenize(query);
        if q.is_empty() {
            return Err(Error::invalid("query is empty after tokenization"));
        }
        self.respond_tokens(&q, mode, decode)
    }

    pub fn respond_tokens(&self, q: &TokenSeq, mode: Mode, decode: DecodeConfig) -> Result<ChatResponse> {
        let start = Instant::now();
        let a = &*self.artifacts;
        let emb = a.embeddings.as_ref();
        let generator = match mode {
            Mode::RetrievalOnly => None,
            _ => Some(a.generator.as_ref().ok_or_else(|| {
                Error::artifact("generator", format!("required by mode {mode}"))
            })?),
        };
        let needs_retrieval = match generator {
            None => true,
            Some(g) => mode == Mode::Ensemble || g.model.arch == Architecture::BiSeq2Seq,
        };

        let t = Instant::now();
        let retrieved = if needs_retrieval {
            retrieve_best(q, &a.index, &a.pairs, &a.matcher, emb, self.config.k)
        } else {
            None
        };
        let retrieve_ms = ms(t);

        let t = Instant::now();
        let generated = match generator {
            Some(g) => self.generate_candidate(g, q, retrieved.as_ref(), decode)?,
            None => None,
        };
        let generate_ms = ms(t);

        let t = Instant::now();
        let retrieved = match mode {
            Mode::GenerationOnly => None,
            _ => retrieved.map(|c| {
                let q_star = &a.pairs[c.source_pair_id.expect("retrieved candidates carry a pair id")].query;
                (c, q_star)
            }),
        };
        let mut response = if retrieved.is_none() && generated.as_ref().is_none_or(Candidate::is_degenerate) {
            ChatResponse::fallback(&self.config.apology)
        } else {
            let r = post_rerank(q, retrieved, generated, &a.matcher, &a.index, emb)?;
            ChatResponse {
                reply: r.winner().reply.clone(),
                provenance: r.winner().provenance,
                candidates: r.candidates,
                timings: Timings::default(),
            }
        };
        response.timings = Timings {
            retrieve_ms,
            generate_ms,
            rerank_ms: ms(t),
            total_ms: ms(start),
        };
        Ok(response)
    }

    /// Runs the generator. A biseq2seq model without a retrieved reply is
    /// skipped; a seq2seq model never looks at it.
    fn generate_candidate(
        &self,
        g: &Generator,
        q: &TokenSeq,
        retrieved: Option<&Candidate>,
        decode: DecodeConfig,
    ) -> Result<Option<Candidate>> {
        let q_ids = g.enc_vocab.encode(q, false);
        let r_ids = match (g.model.arch, retrieved) {
            (Architecture::Seq2Seq, _) => None,
            (Architecture::BiSeq2Seq, Some(c)) => Some(g.enc_vocab.encode(&c.reply, false)),
            (Architecture::BiSeq2Seq, None) => return Ok(None),
        };
        let ids = generate(&g.model, &q_ids, r_ids.as_deref(), &decode)?;
        Ok(Some(Candidate::generated(g.dec_vocab.decode_ids(&ids)?)))
    }
}

/// Share of retrieved vs. generated winners. Fallback responses are not
/// counted in either share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub retrieved: f64,
    pub generated: f64,
    pub fallback_count: usize,
}

pub fn selection_stats<'a, I>(responses: I) -> Result<SelectionStats>
where
    I: IntoIterator<Item = &'a ChatResponse>,
{
    selection_proportions(responses.into_iter().map(|r| r.provenance))
}

pub fn selection_proportions<I>(provenances: I) -> Result<SelectionStats>
where
    I: IntoIterator<Item = Provenance>,
{
    let (mut r, mut g, mut f) = (0usize, 0usize, 0usize);
    for p in provenances {
        match p {
            Provenance::Retrieved => r += 1,
            Provenance::Generated => g += 1,
            Provenance::Fallback => f += 1,
        }
    }
    let n = r + g;
    if n == 0 {
        return Err(Error::invalid("no retrieved or generated responses"));
    }
    Ok(SelectionStats {
        retrieved: r as f64 / n as f64,
        generated: g as f64 / n as f64,
        fallback_count: f,
    })
}

/// Generator triples for `items`, with r* retrieved from `database`. When
/// `items` are themselves database pairs, pass `exclude_self` so that r* is
/// never the target reply's own pair; items with no other candidate are
/// skipped. seq2seq triples carry no r*. Returns the triples and the number
/// skipped.
#[allow(clippy::too_many_arguments)]
pub fn materialize_triples(
    items: &[QueryReplyPair],
    database: &[QueryReplyPair],
    exclude_self: bool,
    arch: Architecture,
    generator_vocab: (&Vocabulary, &Vocabulary),
    index: &InvertedIndex,
    matcher: &MatcherModel,
    embeddings: Option<&EmbeddingTable>,
    k: usize,
) -> (Vec<Triple>, usize) {
    let (enc_vocab, dec_vocab) = generator_vocab;
    let built = crate::par::map(items, |pair| {
        let retrieved = match arch {
            Architecture::Seq2Seq => None,
            Architecture::BiSeq2Seq => {
                let mut coarse = index.coarse_retrieve(&pair.query, k.saturating_add(1));
                if exclude_self {
                    coarse.entries.retain(|&(d, _)| d != pair.id);
                }
                coarse.entries.truncate(k);
                let best = rank_candidates(&pair.query, &coarse, database, matcher, index, embeddings)?;
                Some(enc_vocab.encode(&database[best.pair_id].reply, false))
            }
        };
        Some(Triple {
            query: enc_vocab.encode(&pair.query, false),
            retrieved,
            reply: dec_vocab.encode(&pair.reply, true),
        })
    });
    let total = built.len();
    let triples: Vec<Triple> = built.into_iter().flatten().collect();
    let skipped = total - triples.len();
    (triples, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic;
    use crate::index::top_df_stopwords;
    use crate::matcher::{FEATURE_COUNT, FEATURE_NAMES};
    use crate::neural::{GeneratorModel, ModelDims};

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_whitespace(s)
    }

    fn pairs() -> Vec<QueryReplyPair> {
        vec![
            QueryReplyPair::from_text(0, "where is the library", "second floor"),
            QueryReplyPair::from_text(1, "when does the cafe open", "at nine"),
            QueryReplyPair::from_text(2, "how cold is it", "below zero"),
        ]
    }

    fn weight(name: &str, value: f64) -> [f64; FEATURE_COUNT] {
        let mut w = [0.0; FEATURE_COUNT];
        w[FEATURE_NAMES.iter().position(|n| *n == name).unwrap()] = value;
        w
    }

    fn fixture(arch: Architecture, weights: [f64; FEATURE_COUNT]) -> Arc<Artifacts> {
        let pairs = pairs();
        let index = InvertedIndex::build(&pairs, Default::default()).unwrap();
        let vocab = crate::corpus::build_vocabulary(&pairs, crate::corpus::Side::Both, 100, 1).unwrap();
        let dims = ModelDims {
            enc_vocab: vocab.size(),
            dec_vocab: vocab.size(),
            embed_dim: 3,
            hidden_dim: 4,
        };
        let model = GeneratorModel::with_init_scale(arch, dims, 5, 1.0);
        let generator = Generator::new(model, vocab.clone(), vocab).unwrap();
        Arc::new(Artifacts::new(pairs, index, MatcherModel::from_weights(weights), Some(generator), None).unwrap())
    }

    fn ensemble(arch: Architecture, mode: Mode) -> Ensemble {
        let config = EnsembleConfig {
            mode,
            ..EnsembleConfig::default()
        };
        Ensemble::new(fixture(arch, weight("overlap_qq", 4.0)), config).unwrap()
    }

    #[test]
    fn rerank_picks_the_higher_score() {
        let index = InvertedIndex::build(&pairs(), Default::default()).unwrap();
        let q = seq("where is the library");
        let q_star = seq("where is the library");
        // Only overlap_qr counts: the generated reply shares two tokens with q.
        let m = MatcherModel::from_weights(weight("overlap_qr", 5.0));
        let r = post_rerank(
            &q,
            Some((Candidate::retrieved(seq("second floor"), 0), &q_star)),
            Some(Candidate::generated(seq("the library"))),
            &m,
            &index,
            None,
        )
        .unwrap();
        assert_eq!(r.winner().provenance, Provenance::Generated);
        let (a, b) = (r.candidates[0].score.unwrap(), r.candidates[1].score.unwrap());
        assert!(b > a && a > 0.0 && b < 1.0);

        // overlap_qq only rewards the retrieved side.
        let m = MatcherModel::from_weights(weight("overlap_qq", 5.0));
        let r = post_rerank(
            &q,
            Some((Candidate::retrieved(seq("second floor"), 0), &q_star)),
            Some(Candidate::generated(seq("the library"))),
            &m,
            &index,
            None,
        )
        .unwrap();
        assert_eq!(r.winner().provenance, Provenance::Retrieved);
    }

    #[test]
    fn exact_tie_goes_to_retrieved() {
        let index = InvertedIndex::build(&pairs(), Default::default()).unwrap();
        let q = seq("how cold is it");
        let m = MatcherModel::from_weights([0.0; FEATURE_COUNT]);
        let r = post_rerank(
            &q,
            Some((Candidate::retrieved(seq("below zero"), 2), &q)),
            Some(Candidate::generated(seq("very cold"))),
            &m,
            &index,
            None,
        )
        .unwrap();
        assert_eq!(r.candidates[0].score, r.candidates[1].score);
        assert_eq!(r.chosen, 0);
    }

    #[test]
    fn degenerate_generated_reply_is_dropped() {
        let index = InvertedIndex::build(&pairs(), Default::default()).unwrap();
        let q = seq("how cold is it");
        let m = MatcherModel::from_weights(weight("overlap_qr", 5.0));
        for bad in [seq(""), seq(&format!("{UNK_SURFACE} {UNK_SURFACE}"))] {
            let r = post_rerank(
                &q,
                Some((Candidate::retrieved(seq("below zero"), 2), &q)),
                Some(Candidate::generated(bad.clone())),
                &m,
                &index,
                None,
            )
            .unwrap();
            assert_eq!(r.candidates.len(), 1);
            assert_eq!(r.winner().provenance, Provenance::Retrieved);
            assert!(post_rerank(&q, None, Some(Candidate::generated(bad)), &m, &index, None).is_err());
        }
    }

    #[test]
    fn lone_generated_candidate_wins_regardless_of_score() {
        let index = InvertedIndex::build(&pairs(), Default::default()).unwrap();
        let m = MatcherModel::from_weights(weight("bias", -50.0));
        let r = post_rerank(&seq("x"), None, Some(Candidate::generated(seq("y"))), &m, &index, None).unwrap();
        assert_eq!(r.winner().provenance, Provenance::Generated);
    }

    #[test]
    fn modes_fix_provenance() {
        for arch in [Architecture::Seq2Seq, Architecture::BiSeq2Seq] {
            let e = ensemble(arch, Mode::RetrievalOnly);
            let resp = e.respond("Where is the LIBRARY").unwrap();
            assert_eq!(resp.provenance, Provenance::Retrieved);
            assert_eq!(resp.reply, seq("second floor"));
            assert_eq!(resp.candidates.len(), 1);

            let e = ensemble(arch, Mode::GenerationOnly);
            let resp = e.respond("where is the library").unwrap();
            assert!(matches!(resp.provenance, Provenance::Generated | Provenance::Fallback));
            assert!(resp.candidates.iter().all(|c| c.provenance == Provenance::Generated));

            let e = ensemble(arch, Mode::Ensemble);
            let resp = e.respond("when does the cafe open").unwrap();
            assert!(resp.candidates.iter().any(|c| c.reply == resp.reply));
            assert_eq!(resp.without_timings(), e.respond("when does the cafe open").unwrap().without_timings());
        }
    }

    #[test]
    fn no_retrieval_depends_on_architecture() {
        let e = ensemble(Architecture::BiSeq2Seq, Mode::Ensemble);
        let resp = e.respond("zebra").unwrap();
        assert_eq!(resp.provenance, Provenance::Fallback);
        assert_eq!(resp.reply, seq(DEFAULT_APOLOGY));
        assert!(resp.candidates.is_empty());

        let e = ensemble(Architecture::Seq2Seq, Mode::Ensemble);
        let resp = e.respond("zebra").unwrap();
        assert!(resp.candidates.iter().all(|c| c.provenance == Provenance::Generated));
    }

    #[test]
    fn empty_query_is_rejected() {
        let e = ensemble(Architecture::Seq2Seq, Mode::Ensemble);
        assert!(e.respond("   ").is_err());
    }

    #[test]
    fn selection_proportions() {
        let mk = |p| ChatResponse {
            reply: seq("a"),
            provenance: p,
            candidates: vec![],
            timings: Timings::default(),
        };
        let rs = [
            mk(Provenance::Retrieved),
            mk(Provenance::Retrieved),
            mk(Provenance::Generated),
            mk(Provenance::Retrieved),
            mk(Provenance::Fallback),
        ];
        let s = selection_stats(&rs).unwrap();
        assert_eq!((s.retrieved, s.generated, s.fallback_count), (0.75, 0.25, 1));
        assert!(selection_stats(&rs[4..]).is_err());
    }

    #[test]
    fn materialized_triples_exclude_self() {
        let pairs = synthetic::desk_corpus(40, 3);
        let index = InvertedIndex::build(&pairs, top_df_stopwords(&pairs, 2)).unwrap();
        let vocab: Vocabulary = crate::corpus::build_vocabulary(&pairs, crate::corpus::Side::Both, 500, 1).unwrap();
        let m = MatcherModel::from_weights(weight("overlap_qq", 5.0));
        let (triples, skipped) = materialize_triples(
            &pairs,
            &pairs,
            true,
            Architecture::BiSeq2Seq,
            (&vocab, &vocab),
            &index,
            &m,
            None,
            DEFAULT_K,
        );
        assert_eq!(triples.len() + skipped, pairs.len());
        for (t, p) in triples.iter().zip(&pairs) {
            assert_eq!(t.query, vocab.encode(&p.query, false));
            assert!(t.retrieved.is_some());
        }
        let (plain, skipped) =
            materialize_triples(&pairs, &pairs, true, Architecture::Seq2Seq, (&vocab, &vocab), &index, &m, None, 5);
        assert_eq!((plain.len(), skipped), (pairs.len(), 0));
        assert!(plain.iter().all(|t| t.retrieved.is_none()));
    }
}
