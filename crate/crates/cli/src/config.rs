//! Layered configuration: built-in defaults, then a JSON config file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use retgen_core::corpus::TokenizerConfig;
use retgen_core::ensemble::{ArtifactPaths, EnsembleConfig, Mode, DEFAULT_APOLOGY};
use retgen_core::eval::{EntropyDenominator, DEFAULT_ALPHA};
use retgen_core::index::{DEFAULT_K, DEFAULT_STOPWORD_COUNT};
use retgen_core::matcher::LogisticConfig;
use retgen_core::neural::{AdaDeltaConfig, Architecture, DecodeConfig, TrainConfig, DEFAULT_EPSILON, DEFAULT_RHO};

use crate::CliError;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    pub lowercase: bool,
    pub artifacts: ArtifactSection,
    pub vocab: VocabSection,
    pub index: IndexSection,
    pub matcher: MatcherSection,
    pub generator: GeneratorSection,
    pub decode: DecodeConfig,
    pub ensemble: EnsembleSection,
    pub eval: EvalSection,
    pub serve: ServeSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactSection {
    /// The reply database (TSV or JSONL).
    pub pairs: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub matcher: Option<PathBuf>,
    /// Generator checkpoint manifest.
    pub generator: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub max_size: usize,
    pub min_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub stopword_count: usize,
    /// Explicit stopword file; overrides `stopword_count`.
    pub stopwords: Option<PathBuf>,
    /// Coarse candidate cap.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub negative_ratio: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub arch: Architecture,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub rho: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub mode: Mode,
    pub apology: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub entropy: EntropyDenominator,
    pub unigram_alpha: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub host: String,
    pub port: u16,
    pub cors: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: 0,
            lowercase: true,
            artifacts: ArtifactSection::default(),
            vocab: VocabSection::default(),
            index: IndexSection::default(),
            matcher: MatcherSection::default(),
            generator: GeneratorSection::default(),
            decode: DecodeConfig::default(),
            ensemble: EnsembleSection::default(),
            eval: EvalSection::default(),
            serve: ServeSection::default(),
        }
    }
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection {
            max_size: 30_000,
            min_count: 1,
        }
    }
}

impl Default for IndexSection {
    fn default() -> Self {
        IndexSection {
            stopword_count: DEFAULT_STOPWORD_COUNT,
            stopwords: None,
            k: DEFAULT_K,
        }
    }
}

impl Default for MatcherSection {
    fn default() -> Self {
        let l = LogisticConfig::default();
        MatcherSection {
            epochs: l.epochs,
            learning_rate: l.learning_rate,
            l2: l.l2,
            negative_ratio: 1,
        }
    }
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        GeneratorSection {
            arch: Architecture::BiSeq2Seq,
            embed_dim: 32,
            hidden_dim: 64,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            mode: Mode::Ensemble,
            apology: DEFAULT_APOLOGY.to_owned(),
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            entropy: EntropyDenominator::PerToken,
            unigram_alpha: DEFAULT_ALPHA,
            samples: 5,
        }
    }
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            host: "127.0.0.1".to_owned(),
            port: DEFAULT_PORT,
            cors: true,
        }
    }
}

impl AppConfig {
    /// Defaults overlaid with the file at `path`, if any. Relative artifact
    /// paths in the file are resolved against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(AppConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("config {}: {e}", path.display())))?;
        let mut cfg: AppConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        fix(&mut cfg.artifacts.pairs);
        fix(&mut cfg.artifacts.index);
        fix(&mut cfg.artifacts.matcher);
        fix(&mut cfg.artifacts.generator);
        fix(&mut cfg.index.stopwords);
        Ok(cfg)
    }

    pub fn tokenizer(&self) -> TokenizerConfig {
        TokenizerConfig {
            lowercase: self.lowercase,
        }
    }

    pub fn logistic(&self) -> LogisticConfig {
        LogisticConfig {
            epochs: self.matcher.epochs,
            learning_rate: self.matcher.learning_rate,
            l2: self.matcher.l2,
            seed: self.seed,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.generator.batch_size,
            max_epochs: self.generator.max_epochs,
            optimizer: AdaDeltaConfig {
                rho: self.generator.rho,
                epsilon: self.generator.epsilon,
            },
            patience: self.generator.patience,
            seed: self.seed,
        }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            mode: self.ensemble.mode,
            k: self.index.k,
            decode: self.decode,
            apology: self.ensemble.apology.clone(),
            lowercase: self.lowercase,
        }
    }

    /// Artifact paths for a running ensemble; pairs, index and matcher are
    /// required.
    pub fn artifact_paths(&self) -> Result<ArtifactPaths, CliError> {
        let need = |p: &Option<PathBuf>, name: &str| {
            p.clone()
                .ok_or_else(|| CliError::Usage(format!("no {name} artifact configured (flag --{name} or config)")))
        };
        Ok(ArtifactPaths {
            pairs: need(&self.artifacts.pairs, "pairs")?,
            index: need(&self.artifacts.index, "index")?,
            matcher: need(&self.artifacts.matcher, "matcher")?,
            generator: self.artifacts.generator.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, "{}").unwrap();
        assert_eq!(AppConfig::load(Some(&p)).unwrap(), AppConfig::default());
    }

    #[test]
    fn file_overrides_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(
            &p,
            r#"{"seed": 9, "artifacts": {"index": "idx.txt"}, "serve": {"port": 9000}, "ensemble": {"mode": "retrieval_only"}}"#,
        )
        .unwrap();
        let c = AppConfig::load(Some(&p)).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.serve.port, 9000);
        assert!(c.serve.cors);
        assert_eq!(c.ensemble.mode, Mode::RetrievalOnly);
        assert_eq!(c.artifacts.index.unwrap(), dir.path().join("idx.txt"));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"sede": 1}"#).unwrap();
        assert!(matches!(AppConfig::load(Some(&p)), Err(CliError::Usage(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let c = AppConfig::default();
        let back: AppConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
