use std::io::{BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};

use retgen_core::corpus::{
    build_vocabulary, load_pairs_with, split_dataset, synthetic, write_pairs_tsv, CorpusFormat, LoadOptions,
    QueryReplyPair, Side, Vocabulary,
};
use retgen_core::ensemble::{
    generator_embeddings, materialize_triples, Artifacts, Ensemble, EnsembleConfig, Mode, Provenance,
};
use retgen_core::eval::{
    build_unigram, evaluate_systems, DialogSystem, EchoSystem, EnsembleSystem, EvalConfig, TestCase,
};
use retgen_core::index::{load_stopwords, top_df_stopwords, InvertedIndex};
use retgen_core::matcher::{featurize, generate_examples, train_matcher, EmbeddingSource, EmbeddingTable, MatcherModel};
use retgen_core::neural::{train, Architecture, Generator, GeneratorModel, ModelDims, Triple};

use crate::config::AppConfig;
use crate::server::{checksums, AppState};
use crate::{
    BuildVocabArgs, ChatArgs, Cli, CliError, Command, CorpusCommand, EvalCommand, EvalRunArgs, GenCommand,
    GenTrainArgs, IndexBuildArgs, IndexCommand, MatcherCommand, MatcherTrainArgs, RetrievalArgs, ServeArgs,
    ServiceArgs, SplitArgs, SynthArgs, SynthKind,
};

type CliResult<T = ()> = Result<T, CliError>;

pub fn dispatch(cli: Cli) -> CliResult {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Corpus(CorpusCommand::Synth(a)) => corpus_synth(&cfg, a),
        Command::Corpus(CorpusCommand::Split(a)) => corpus_split(&cfg, a),
        Command::Corpus(CorpusCommand::BuildVocab(a)) => corpus_build_vocab(&mut cfg, a),
        Command::Index(IndexCommand::Build(a)) => index_build(&mut cfg, a),
        Command::Matcher(MatcherCommand::Train(a)) => matcher_train(&mut cfg, a),
        Command::Gen(GenCommand::Train(a)) => gen_train(&mut cfg, a),
        Command::Eval(EvalCommand::Run(a)) => eval_run(&mut cfg, a),
        Command::Chat(a) => chat(&mut cfg, a),
        Command::Serve(a) => serve(&mut cfg, a),
    }
}

fn load(cfg: &AppConfig, path: &Path) -> CliResult<Vec<QueryReplyPair>> {
    let opts = LoadOptions {
        tokenizer: cfg.tokenizer(),
        ..LoadOptions::default()
    };
    let loaded = load_pairs_with(path, CorpusFormat::from_path(path), opts)?;
    if loaded.dropped > 0 {
        warn!("{}: dropped {} records with an empty side", path.display(), loaded.dropped);
    }
    info!("{}: {} pairs", path.display(), loaded.pairs.len());
    Ok(loaded.pairs)
}

fn create_parent(path: &Path) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult {
    create_parent(path)?;
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn pick(flag: &Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| CliError::Usage(format!("missing --{name} (or set it in the config)")))
}

fn corpus_synth(cfg: &AppConfig, a: SynthArgs) -> CliResult {
    let pairs = match a.kind {
        SynthKind::Desk => synthetic::desk_corpus(a.n, cfg.seed),
        SynthKind::Copy => synthetic::copy_task(a.n, a.words, cfg.seed),
    };
    create_parent(&a.out)?;
    write_pairs_tsv(&a.out, &pairs)?;
    println!("wrote {} pairs to {}", pairs.len(), a.out.display());
    Ok(())
}

fn corpus_split(cfg: &AppConfig, a: SplitArgs) -> CliResult {
    let pairs = load(cfg, &a.pairs)?;
    let ratios = (a.ratios[0], a.ratios[1], a.ratios[2]);
    let split = split_dataset(pairs.len(), ratios, cfg.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", a.out_dir.display())))?;
    for (name, ids) in [("train", &split.train), ("valid", &split.validation), ("test", &split.test)] {
        let subset: Vec<QueryReplyPair> = ids.iter().map(|&i| pairs[i].clone()).collect();
        let path = a.out_dir.join(format!("{name}.tsv"));
        write_pairs_tsv(&path, &subset)?;
        println!("{name}: {} pairs -> {}", subset.len(), path.display());
    }
    Ok(())
}

fn corpus_build_vocab(cfg: &mut AppConfig, a: BuildVocabArgs) -> CliResult {
    if let Some(m) = a.max_size {
        cfg.vocab.max_size = m;
    }
    if let Some(m) = a.min_count {
        cfg.vocab.min_count = m;
    }
    let pairs = load(cfg, &a.pairs)?;
    let build = |side| {
        build_vocabulary(&pairs, side, cfg.vocab.max_size, cfg.vocab.min_count)
            .map_err(|e| CliError::Usage(e.to_string()))
    };
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", a.out_dir.display())))?;
    for (name, side) in [("enc_vocab", Side::Both), ("dec_vocab", Side::Reply)] {
        let vocab = build(side)?;
        let path = a.out_dir.join(format!("{name}.json"));
        vocab.save(&path)?;
        println!("{name}: {} entries -> {}", vocab.size(), path.display());
    }
    Ok(())
}

fn index_build(cfg: &mut AppConfig, a: IndexBuildArgs) -> CliResult {
    if let Some(n) = a.stopword_count {
        cfg.index.stopword_count = n;
    }
    if a.stopwords.is_some() {
        cfg.index.stopwords = a.stopwords.clone();
    }
    let pairs_path = pick(&a.pairs, &cfg.artifacts.pairs, "pairs")?;
    let pairs = load(cfg, &pairs_path)?;
    let stopwords = match &cfg.index.stopwords {
        Some(p) => load_stopwords(p)?,
        None => top_df_stopwords(&pairs, cfg.index.stopword_count),
    };
    let index = InvertedIndex::build(&pairs, stopwords)?;
    create_parent(&a.out)?;
    index.save(&a.out)?;
    println!(
        "index: {} docs, {} terms, {} stopwords -> {}",
        index.n_docs(),
        index.n_terms(),
        index.stopwords().len(),
        a.out.display()
    );
    Ok(())
}

/// `target` relative to `base_dir` when it lies below it, else absolute.
fn relative_to(target: &Path, base_dir: &Path) -> CliResult<String> {
    let abs = |p: &Path| {
        std::path::absolute(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
    };
    let (t, b) = (abs(target)?, abs(base_dir)?);
    let rel = t.strip_prefix(&b).map(Path::to_path_buf).unwrap_or(t);
    Ok(rel.to_string_lossy().into_owned())
}

fn matcher_train(cfg: &mut AppConfig, a: MatcherTrainArgs) -> CliResult {
    if let Some(v) = a.epochs {
        cfg.matcher.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.matcher.learning_rate = v;
    }
    if let Some(v) = a.l2 {
        cfg.matcher.l2 = v;
    }
    if let Some(v) = a.negative_ratio {
        cfg.matcher.negative_ratio = v;
    }
    let pairs = load(cfg, &pick(&a.pairs, &cfg.artifacts.pairs, "pairs")?)?;
    let index = InvertedIndex::load(&pick(&a.index, &cfg.artifacts.index, "index")?)?;
    if index.n_docs() != pairs.len() {
        return Err(CliError::Runtime(format!(
            "index covers {} pairs, database has {}",
            index.n_docs(),
            pairs.len()
        )));
    }
    let (embeddings, source) = match &a.embeddings {
        Some(manifest) => {
            let g = Generator::load(manifest)?;
            let out_dir = a.out.parent().unwrap_or_else(|| Path::new(""));
            (
                Some(generator_embeddings(&g)?),
                EmbeddingSource::Generator {
                    manifest: relative_to(manifest, out_dir)?,
                },
            )
        }
        None => (None, EmbeddingSource::None),
    };
    let examples = generate_examples(&pairs, cfg.matcher.negative_ratio, cfg.seed)?;
    let labeled = featurize(&examples, &pairs, &index, embeddings.as_ref());
    let (model, history) = train_matcher(&labeled, &cfg.logistic(), source)?;
    create_parent(&a.out)?;
    model.save(&a.out)?;
    println!(
        "matcher: {} examples, loss {:.4} -> {:.4}, training accuracy {:.3} -> {}",
        labeled.len(),
        history.first().copied().unwrap_or(f64::NAN),
        history.last().copied().unwrap_or(f64::NAN),
        model.metadata.training_accuracy.unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

struct Retrieval {
    database: Vec<QueryReplyPair>,
    database_path: PathBuf,
    index: InvertedIndex,
    matcher: MatcherModel,
    embeddings: Option<EmbeddingTable>,
}

fn load_retrieval(cfg: &AppConfig, r: &RetrievalArgs, default_pairs: Option<&Path>) -> CliResult<Retrieval> {
    let database_path = match (&r.pairs, &cfg.artifacts.pairs, default_pairs) {
        (Some(p), _, _) | (None, Some(p), _) => p.clone(),
        (None, None, Some(p)) => p.to_path_buf(),
        (None, None, None) => return Err(CliError::Usage("missing --pairs (or set it in the config)".into())),
    };
    let mut paths = cfg.artifact_paths().unwrap_or_else(|_| retgen_core::ensemble::ArtifactPaths {
        pairs: PathBuf::new(),
        index: PathBuf::new(),
        matcher: PathBuf::new(),
        generator: None,
    });
    paths.pairs = database_path.clone();
    paths.index = pick(&r.index, &cfg.artifacts.index, "index")?;
    paths.matcher = pick(&r.matcher, &cfg.artifacts.matcher, "matcher")?;
    paths.generator = None;
    let a = Artifacts::load(&paths, cfg.tokenizer())?;
    Ok(Retrieval {
        database: a.pairs,
        database_path,
        index: a.index,
        matcher: a.matcher,
        embeddings: a.embeddings,
    })
}

fn gen_train(cfg: &mut AppConfig, a: GenTrainArgs) -> CliResult {
    let g = &mut cfg.generator;
    if let Some(v) = a.arch {
        g.arch = v;
    }
    if let Some(v) = a.embed_dim {
        g.embed_dim = v;
    }
    if let Some(v) = a.hidden_dim {
        g.hidden_dim = v;
    }
    if let Some(v) = a.batch_size {
        g.batch_size = v;
    }
    if let Some(v) = a.max_epochs {
        g.max_epochs = v;
    }
    if let Some(v) = a.patience {
        g.patience = v;
    }
    let arch = cfg.generator.arch;
    let train_pairs = load(cfg, &a.train)?;
    let valid_pairs = load(cfg, &a.valid)?;
    let enc_vocab = Vocabulary::load(&a.enc_vocab)?;
    let dec_vocab = Vocabulary::load(&a.dec_vocab)?;
    let vocabs = (&enc_vocab, &dec_vocab);

    let (train_triples, valid_triples) = match arch {
        Architecture::Seq2Seq => {
            let plain = |pairs: &[QueryReplyPair]| -> Vec<Triple> {
                pairs
                    .iter()
                    .map(|p| Triple {
                        query: enc_vocab.encode(&p.query, false),
                        retrieved: None,
                        reply: dec_vocab.encode(&p.reply, true),
                    })
                    .collect()
            };
            (plain(&train_pairs), plain(&valid_pairs))
        }
        Architecture::BiSeq2Seq => {
            let r = load_retrieval(cfg, &a.retrieval, Some(&a.train))?;
            let exclude_self = same_file(&r.database_path, &a.train);
            let k = cfg.index.k;
            let emb = r.embeddings.as_ref();
            let (t, skipped_t) = materialize_triples(
                &train_pairs, &r.database, exclude_self, arch, vocabs, &r.index, &r.matcher, emb, k,
            );
            let (v, skipped_v) =
                materialize_triples(&valid_pairs, &r.database, false, arch, vocabs, &r.index, &r.matcher, emb, k);
            if skipped_t + skipped_v > 0 {
                warn!("{skipped_t} training and {skipped_v} validation pairs had no retrieved reply and were skipped");
            }
            (t, v)
        }
    };
    if train_triples.is_empty() || valid_triples.is_empty() {
        return Err(CliError::Runtime("no usable training or validation triples".into()));
    }

    let dims = ModelDims {
        enc_vocab: enc_vocab.size(),
        dec_vocab: dec_vocab.size(),
        embed_dim: cfg.generator.embed_dim,
        hidden_dim: cfg.generator.hidden_dim,
    };
    let model = GeneratorModel::new(arch, dims, cfg.seed);
    info!("{} parameters", model.parameter_count());
    let (model, history) = train(model, &train_triples, &valid_triples, &cfg.train())?;
    let generator = Generator::new(model, enc_vocab, dec_vocab)?;
    generator.save(&a.out)?;
    let history_path = a.out.with_extension("history.json");
    let mut text = serde_json::to_string_pretty(&history).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_text(&history_path, &text)?;
    println!(
        "{}: {} epochs, best epoch {} (val perplexity {:.3}), train loss {:.4} -> {:.4} per token -> {}",
        arch.as_str(),
        history.epochs.len(),
        history.best_epoch,
        history.best_val_perplexity,
        history.initial_train_loss,
        history.final_train_loss(),
        a.out.display()
    );
    Ok(())
}

fn eval_run(cfg: &mut AppConfig, a: EvalRunArgs) -> CliResult {
    if let Some(e) = a.entropy {
        cfg.eval.entropy = e;
    }
    let known = ["retrieval", "seq2seq", "biseq2seq", "rerank-seq2seq", "ensemble", "echo"];
    if let Some(bad) = a.systems.iter().find(|s| !known.contains(&s.as_str())) {
        return Err(CliError::Usage(format!("unknown system {bad:?}; expected one of {}", known.join(", "))));
    }
    let test_pairs = load(cfg, &a.test)?;
    let cases: Vec<TestCase> = test_pairs
        .iter()
        .map(|p| TestCase {
            query: p.query.clone(),
            reference: p.reply.clone(),
        })
        .collect();

    let needs_retrieval = a.systems.iter().any(|s| s != "echo");
    let retrieval = if needs_retrieval {
        Some(load_retrieval(cfg, &a.retrieval, None)?)
    } else {
        None
    };
    let seq2seq = a.seq2seq.as_deref().map(Generator::load).transpose()?;
    let biseq2seq = a.biseq2seq.as_deref().map(Generator::load).transpose()?;

    let base = EnsembleConfig {
        ..cfg.ensemble()
    };
    let make = |generator: Option<&Generator>, mode: Mode, name: &str| -> CliResult<EnsembleSystem> {
        let r = retrieval.as_ref().expect("retrieval loaded for non-echo systems");
        if mode != Mode::RetrievalOnly && generator.is_none() {
            let flag = if name.contains("seq2seq") && !name.starts_with("bi") { "--seq2seq" } else { "--biseq2seq" };
            return Err(CliError::Usage(format!("system {name} needs {flag}")));
        }
        let artifacts = Artifacts::new(
            r.database.clone(),
            r.index.clone(),
            r.matcher.clone(),
            generator.cloned(),
            r.embeddings.clone(),
        )?;
        let ensemble = Ensemble::new(Arc::new(artifacts), EnsembleConfig { mode, ..base.clone() })?;
        Ok(EnsembleSystem {
            name: name.to_owned(),
            ensemble,
            mode,
        })
    };
    let mut owned: Vec<Box<dyn DialogSystem + Send>> = Vec::new();
    for name in &a.systems {
        let sys: Box<dyn DialogSystem + Send> = match name.as_str() {
            "echo" => Box::new(EchoSystem),
            "retrieval" => Box::new(make(None, Mode::RetrievalOnly, name)?),
            "seq2seq" => Box::new(make(seq2seq.as_ref(), Mode::GenerationOnly, name)?),
            "biseq2seq" => Box::new(make(biseq2seq.as_ref(), Mode::GenerationOnly, name)?),
            "rerank-seq2seq" => Box::new(make(seq2seq.as_ref(), Mode::Ensemble, name)?),
            "ensemble" => Box::new(make(biseq2seq.as_ref(), Mode::Ensemble, name)?),
            _ => unreachable!("checked above"),
        };
        owned.push(sys);
    }
    let systems: Vec<&dyn DialogSystem> = owned.iter().map(|b| b.as_ref() as &dyn DialogSystem).collect();

    // Unigram support: the decoder vocabulary if a generator is loaded,
    // otherwise a reply vocabulary built from the unigram corpus.
    let unigram_pairs = match (&a.unigram_corpus, &retrieval) {
        (Some(p), _) => load(cfg, p)?,
        (None, Some(r)) => r.database.clone(),
        (None, None) => test_pairs.clone(),
    };
    let replies: Vec<_> = unigram_pairs.iter().map(|p| p.reply.clone()).collect();
    let support_vocab = match biseq2seq.as_ref().or(seq2seq.as_ref()) {
        Some(g) => g.dec_vocab.clone(),
        None => build_vocabulary(&unigram_pairs, Side::Reply, cfg.vocab.max_size, cfg.vocab.min_count)?,
    };
    let unigram = build_unigram(&replies, &support_vocab, cfg.eval.unigram_alpha)?;

    let eval_cfg = EvalConfig {
        entropy: cfg.eval.entropy,
        samples: cfg.eval.samples,
    };
    let report = evaluate_systems(&cases, &systems, &unigram, &eval_cfg)?;
    write_text(&a.out_json, &report.to_json()?)?;
    let table = report.to_table();
    if let Some(p) = &a.out_table {
        write_text(p, &table)?;
    }
    print!("{table}");
    Ok(())
}

fn service_config(cfg: &mut AppConfig, s: &ServiceArgs) -> CliResult {
    let art = &mut cfg.artifacts;
    for (flag, slot) in [
        (&s.retrieval.pairs, &mut art.pairs),
        (&s.retrieval.index, &mut art.index),
        (&s.retrieval.matcher, &mut art.matcher),
        (&s.generator, &mut art.generator),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    if let Some(m) = s.mode {
        cfg.ensemble.mode = m;
    }
    if let Some(v) = s.max_len {
        cfg.decode.max_len = v;
    }
    if let Some(v) = s.beam_width {
        cfg.decode.beam_width = v;
    }
    if let Some(v) = s.k {
        cfg.index.k = v;
    }
    Ok(())
}

/// Loads artifacts and builds the ensemble, failing with the artifact name.
pub fn build_ensemble(cfg: &AppConfig) -> CliResult<Ensemble> {
    let paths = cfg.artifact_paths()?;
    let artifacts = Artifacts::load(&paths, cfg.tokenizer())?;
    Ok(Ensemble::new(Arc::new(artifacts), cfg.ensemble())?)
}

fn provenance_tag(p: Provenance) -> &'static str {
    p.as_str()
}

fn chat(cfg: &mut AppConfig, a: ChatArgs) -> CliResult {
    service_config(cfg, &a.service)?;
    let ensemble = build_ensemble(cfg)?;
    let stdin = std::io::stdin();
    let interactive = stdin.is_terminal();
    let mut out = std::io::stdout().lock();
    let prompt = || {
        if interactive {
            eprint!("> ");
        }
    };
    prompt();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| CliError::Runtime(format!("stdin: {e}")))?;
        if line.trim().is_empty() {
            prompt();
            continue;
        }
        match ensemble.respond(&line) {
            Ok(resp) => {
                writeln!(out, "{}", resp.reply).map_err(|e| CliError::Runtime(e.to_string()))?;
                if a.show_candidates {
                    for c in &resp.candidates {
                        let mark = if c.reply == resp.reply && c.provenance == resp.provenance { "<-" } else { "  " };
                        writeln!(
                            out,
                            "  {mark} [{} {:.4}] {}",
                            provenance_tag(c.provenance),
                            c.score.unwrap_or(f64::NAN),
                            c.reply
                        )
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                    }
                }
                out.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            Err(e) => eprintln!("error: {e}"),
        }
        prompt();
    }
    Ok(())
}

fn serve(cfg: &mut AppConfig, a: ServeArgs) -> CliResult {
    service_config(cfg, &a.service)?;
    if let Some(h) = a.host {
        cfg.serve.host = h;
    }
    if let Some(p) = a.port {
        cfg.serve.port = p;
    }
    if a.no_cors {
        cfg.serve.cors = false;
    }
    let addr: SocketAddr = format!("{}:{}", cfg.serve.host, cfg.serve.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad listen address: {e}")))?;
    let ensemble = build_ensemble(cfg)?;
    let sums = checksums(cfg)?;
    let cors = cfg.serve.cors;
    let state = Arc::new(AppState::new(ensemble, cfg.clone(), sums));
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(crate::server::serve(state, addr, cors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_below_the_base() {
        assert_eq!(relative_to(Path::new("out/gen/bi.json"), Path::new("out")).unwrap(), "gen/bi.json");
        let outside = relative_to(Path::new("elsewhere/bi.json"), Path::new("out")).unwrap();
        assert!(Path::new(&outside).is_absolute());
    }

    #[test]
    fn pick_prefers_the_flag() {
        let flag = Some(PathBuf::from("a"));
        let cfg = Some(PathBuf::from("b"));
        assert_eq!(pick(&flag, &cfg, "x").unwrap(), PathBuf::from("a"));
        assert_eq!(pick(&None, &cfg, "x").unwrap(), PathBuf::from("b"));
        assert!(matches!(pick(&None, &None, "x"), Err(CliError::Usage(_))));
    }
}
