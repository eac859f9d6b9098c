//! `retgen`: build, train, evaluate and serve the retrieval/generation
//! dialog ensemble.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, bad config),
//! 2 on runtime errors (missing files, corrupt artifacts, training failure).

pub mod commands;
pub mod config;
pub mod server;
pub mod wire;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use retgen_core::ensemble::Mode;
use retgen_core::eval::EntropyDenominator;
use retgen_core::neural::Architecture;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<retgen_core::Error> for CliError {
    fn from(e: retgen_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "retgen", version, about = "Retrieval + generation dialog ensemble")]
pub struct Cli {
    /// JSON config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for splits, sampling and initialization.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus utilities.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Inverted index over the database queries.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Logistic matcher.
    #[command(subcommand)]
    Matcher(MatcherCommand),
    /// GRU generator.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Interactive chat on stdin/stdout.
    Chat(ChatArgs),
    /// HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Write a synthetic corpus as TSV.
    Synth(SynthArgs),
    /// Split a corpus into train/valid/test TSV files.
    Split(SplitArgs),
    /// Build encoder (query + reply) and decoder (reply) vocabularies.
    BuildVocab(BuildVocabArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Desk,
    Copy,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "desk")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Distinct words for the copy task.
    #[arg(long, default_value_t = 26)]
    pub words: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub ratios: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Writes enc_vocab.json and dec_vocab.json here.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    Build(IndexBuildArgs),
}

#[derive(Debug, Args)]
pub struct IndexBuildArgs {
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Stopword file (one per line); default is the most frequent terms.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub stopword_count: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum MatcherCommand {
    Train(MatcherTrainArgs),
}

#[derive(Debug, Args)]
pub struct MatcherTrainArgs {
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub negative_ratio: Option<usize>,
    /// Use this generator checkpoint's query embeddings for the
    /// embedding-cosine features.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    Train(GenTrainArgs),
}

#[derive(Debug, Args)]
pub struct GenTrainArgs {
    #[arg(long)]
    pub arch: Option<Architecture>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub enc_vocab: PathBuf,
    #[arg(long)]
    pub dec_vocab: PathBuf,
    /// Checkpoint manifest to write (`.json`).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

/// Retrieval artifacts, used by biseq2seq training to look up r*.
#[derive(Debug, Args, Default)]
pub struct RetrievalArgs {
    /// Reply database; defaults to the training pairs.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub matcher: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    Run(EvalRunArgs),
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated: retrieval, seq2seq, biseq2seq, rerank-seq2seq,
    /// ensemble, echo.
    #[arg(long, value_delimiter = ',', default_value = "retrieval,seq2seq,biseq2seq,ensemble")]
    pub systems: Vec<String>,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[arg(long)]
    pub seq2seq: Option<PathBuf>,
    #[arg(long)]
    pub biseq2seq: Option<PathBuf>,
    /// Replies the unigram model is estimated from; defaults to the
    /// database.
    #[arg(long)]
    pub unigram_corpus: Option<PathBuf>,
    #[arg(long)]
    pub entropy: Option<EntropyDenominator>,
    #[arg(long)]
    pub out_json: PathBuf,
    #[arg(long)]
    pub out_table: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ServiceArgs {
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[arg(long)]
    pub generator: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    /// Print every scored candidate under the reply.
    #[arg(long)]
    pub show_candidates: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Disable permissive cross-origin headers.
    #[arg(long)]
    pub no_cors: bool,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
