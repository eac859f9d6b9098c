//! On-disk checkpoints: a JSON manifest plus a payload of little-endian
//! f32 values in catalog order. Vocabulary references in the manifest are
//! resolved relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{Architecture, GeneratorModel, ModelDims};
use crate::corpus::Vocabulary;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in f32 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub architecture: Architecture,
    pub dims: ModelDims,
    pub enc_vocab: String,
    pub dec_vocab: String,
    pub payload: String,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointManifest {
    pub fn describe(model: &GeneratorModel, enc_vocab: &str, dec_vocab: &str, payload: &str) -> Self {
        let mut offset = 0;
        let tensors = model
            .tensors()
            .into_iter()
            .map(|t| {
                let entry = TensorEntry {
                    name: t.name,
                    shape: t.shape,
                    offset,
                };
                offset += t.data.len();
                entry
            })
            .collect();
        CheckpointManifest {
            version: CHECKPOINT_VERSION,
            architecture: model.arch,
            dims: model.dims,
            enc_vocab: enc_vocab.to_owned(),
            dec_vocab: dec_vocab.to_owned(),
            payload: payload.to_owned(),
            tensors,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: CheckpointManifest = serde_json::from_str(&text)?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(Error::artifact(
                "checkpoint",
                format!("unsupported version {}", manifest.version),
            ));
        }
        Ok(manifest)
    }

    /// Resolves a reference against the directory holding `manifest_path`.
    pub fn resolve(manifest_path: &Path, reference: &str) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new(""))
            .join(reference)
    }
}

pub fn encode_payload(model: &GeneratorModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.parameter_count() * 4);
    for t in model.tensors() {
        for &v in t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Rebuilds a model from a manifest and payload bytes, checking the tensor
/// catalog against the structure implied by the manifest's dims.
pub fn decode_payload(manifest: &CheckpointManifest, bytes: &[u8]) -> Result<GeneratorModel> {
    let bad = |msg: String| Error::artifact("checkpoint", msg);
    if bytes.len() % 4 != 0 {
        return Err(bad(format!("payload length {} is not a multiple of 4", bytes.len())));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut model = GeneratorModel::new(manifest.architecture, manifest.dims, 0);
    let expected = model.parameter_count();
    if values.len() != expected {
        return Err(bad(format!(
            "payload holds {} values, dims imply {expected}",
            values.len()
        )));
    }
    let shapes: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    if shapes.len() != manifest.tensors.len() {
        return Err(bad(format!(
            "catalog lists {} tensors, expected {}",
            manifest.tensors.len(),
            shapes.len()
        )));
    }
    for (t, (entry, (name, shape))) in model
        .tensors_mut()
        .into_iter()
        .zip(manifest.tensors.iter().zip(&shapes))
    {
        if &entry.name != name || &entry.shape != shape {
            return Err(bad(format!(
                "catalog entry {} {:?} does not match expected {name} {shape:?}",
                entry.name, entry.shape
            )));
        }
        let end = entry.offset + t.data.len();
        let src = values
            .get(entry.offset..end)
            .ok_or_else(|| bad(format!("tensor {name} runs past the payload")))?;
        for (d, &s) in t.data.iter_mut().zip(src) {
            *d = f64::from(s);
        }
    }
    if !model.all_finite() {
        return Err(bad("payload contains non-finite values".into()));
    }
    Ok(model)
}

/// A trained model with the vocabularies it was trained against.
#[derive(Debug, Clone)]
pub struct Generator {
    pub model: GeneratorModel,
    pub enc_vocab: Vocabulary,
    pub dec_vocab: Vocabulary,
}

impl Generator {
    pub fn new(model: GeneratorModel, enc_vocab: Vocabulary, dec_vocab: Vocabulary) -> Result<Self> {
        if enc_vocab.size() != model.dims.enc_vocab || dec_vocab.size() != model.dims.dec_vocab {
            return Err(Error::Shape(format!(
                "vocabulary sizes {}/{} do not match model dims {}/{}",
                enc_vocab.size(),
                dec_vocab.size(),
                model.dims.enc_vocab,
                model.dims.dec_vocab
            )));
        }
        Ok(Generator {
            model,
            enc_vocab,
            dec_vocab,
        })
    }

    /// Writes `<stem>.json` (manifest), `<stem>.bin` (payload) and the two
    /// vocabularies next to it. `manifest_path` must end in `.json`.
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let stem = manifest_path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::invalid(format!("bad manifest path {}", manifest_path.display())))?;
        let enc_ref = format!("{stem}.enc_vocab.json");
        let dec_ref = format!("{stem}.dec_vocab.json");
        let payload_ref = format!("{stem}.bin");
        let manifest = CheckpointManifest::describe(&self.model, &enc_ref, &dec_ref, &payload_ref);

        if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.enc_vocab
            .save(&CheckpointManifest::resolve(manifest_path, &enc_ref))?;
        self.dec_vocab
            .save(&CheckpointManifest::resolve(manifest_path, &dec_ref))?;
        let payload_path = CheckpointManifest::resolve(manifest_path, &payload_ref);
        fs::write(&payload_path, encode_payload(&self.model)).map_err(|e| Error::io(&payload_path, e))?;
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = CheckpointManifest::load(manifest_path)?;
        let payload_path = CheckpointManifest::resolve(manifest_path, &manifest.payload);
        let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
        let model = decode_payload(&manifest, &bytes)?;
        let enc_vocab = Vocabulary::load(&CheckpointManifest::resolve(manifest_path, &manifest.enc_vocab))?;
        let dec_vocab = Vocabulary::load(&CheckpointManifest::resolve(manifest_path, &manifest.dec_vocab))?;
        Generator::new(model, enc_vocab, dec_vocab)
    }
}
