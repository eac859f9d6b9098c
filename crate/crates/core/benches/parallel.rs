//! Parallel core against a single worker thread.
//!
//! `cargo bench -p retgen-core` times each workload under a one-thread
//! rayon pool and under the default pool. With `--no-default-features` the
//! helpers in `par` compile to plain iterators and both rows measure the
//! sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use retgen_core::corpus::{build_vocabulary, synthetic, Side, TokenSeq};
use retgen_core::eval::bleu_detail;
use retgen_core::neural::{backward, perplexity, Architecture, GeneratorModel, ModelDims, Triple};

fn triples(n: usize) -> (Vec<Triple>, usize) {
    let pairs = synthetic::desk_corpus(n, 1);
    let vocab = build_vocabulary(&pairs, Side::Both, 30_000, 1).unwrap();
    let t = pairs
        .iter()
        .map(|p| Triple {
            query: vocab.encode(&p.query, false),
            retrieved: Some(vocab.encode(&p.reply, false)),
            reply: vocab.encode(&p.reply, true),
        })
        .collect();
    (t, vocab.size())
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut out = vec![("1 thread".to_owned(), ThreadPoolBuilder::new().num_threads(1).build().unwrap())];
    if threads > 1 {
        out.push((format!("{threads} threads"), ThreadPoolBuilder::new().num_threads(threads).build().unwrap()));
    }
    out
}

fn bench(c: &mut Criterion) {
    let (data, v) = triples(256);
    let dims = ModelDims { enc_vocab: v, dec_vocab: v, embed_dim: 32, hidden_dim: 64 };
    let model = GeneratorModel::new(Architecture::BiSeq2Seq, dims, 0);
    let batch = &data[..64];

    let pairs = synthetic::desk_corpus(2000, 2);
    let cands: Vec<TokenSeq> = pairs.iter().map(|p| p.query.clone()).collect();
    let refs: Vec<TokenSeq> = pairs.iter().map(|p| p.reply.clone()).collect();

    let mut g = c.benchmark_group("par");
    g.sample_size(10);
    for (label, pool) in pools() {
        g.bench_function(BenchmarkId::new("batch_gradient_64", &label), |b| {
            b.iter(|| pool.install(|| backward(&model, batch).unwrap()))
        });
        g.bench_function(BenchmarkId::new("dataset_perplexity_256", &label), |b| {
            b.iter(|| pool.install(|| perplexity(&model, &data).unwrap()))
        });
        g.bench_function(BenchmarkId::new("bleu_2000", &label), |b| {
            b.iter(|| pool.install(|| bleu_detail(&cands, &refs, 4).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
