#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use std::io::Write;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_retgen")
}

pub fn retgen(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn retgen")
}

pub fn retgen_stdin(dir: &Path, args: &[&str], input: &str) -> Output {
    let mut child = Command::new(bin())
        .current_dir(dir)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn retgen");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().expect("wait retgen")
}

/// Runs `args`, panicking with stderr unless it exits 0.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = retgen(dir, args);
    assert!(
        out.status.success(),
        "retgen {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Artifacts of a desk-scale run, all relative to `dir`.
pub struct Desk {
    pub dir: PathBuf,
}

impl Desk {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn service_flags(&self) -> Vec<String> {
        ["--pairs", "all.tsv", "--index", "index.json", "--matcher", "matcher.json", "--generator", "bi.json"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

/// Corpus, index (8 stopwords), matcher and a biseq2seq generator over the
/// whole corpus; optionally a seq2seq generator and a train/valid/test
/// split.
pub fn build_desk(dir: &Path, n_pairs: usize, seed: u64, epochs: usize, with_seq2seq: bool) -> Desk {
    let s = seed.to_string();
    let n = n_pairs.to_string();
    let e = epochs.to_string();
    ok(dir, &["--seed", &s, "corpus", "synth", "--kind", "desk", "--n", &n, "--out", "all.tsv"]);
    ok(dir, &["--seed", &s, "corpus", "split", "--pairs", "all.tsv", "--out-dir", "."]);
    ok(dir, &["corpus", "build-vocab", "--pairs", "all.tsv", "--out-dir", "."]);
    ok(dir, &["index", "build", "--pairs", "all.tsv", "--out", "index.json", "--stopword-count", "8"]);
    ok(dir, &["--seed", &s, "matcher", "train", "--pairs", "all.tsv", "--index", "index.json", "--out", "matcher.json"]);
    let gen = |arch: &str, out: &str| {
        ok(
            dir,
            &[
                "--seed", &s, "gen", "train", "--arch", arch, "--train", "all.tsv", "--valid", "valid.tsv",
                "--enc-vocab", "enc_vocab.json", "--dec-vocab", "dec_vocab.json", "--out", out,
                "--index", "index.json", "--matcher", "matcher.json", "--embed-dim", "16", "--hidden-dim", "32",
                "--batch-size", "10", "--max-epochs", &e, "--patience", &e,
            ],
        )
    };
    gen("biseq2seq", "bi.json");
    if with_seq2seq {
        gen("seq2seq", "s2s.json");
    }
    Desk { dir: dir.to_path_buf() }
}

/// Config file pointing at the desk artifacts, written next to them.
pub fn write_config(desk: &Desk, extra: &str) -> PathBuf {
    let p = desk.path("config.json");
    let body = format!(
        r#"{{"artifacts": {{"pairs": "all.tsv", "index": "index.json", "matcher": "matcher.json", "generator": "bi.json"}}{extra}}}"#
    );
    std::fs::write(&p, body).unwrap();
    p
}
