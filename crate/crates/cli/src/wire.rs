//! JSON bodies of the HTTP service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use retgen_core::ensemble::{ChatResponse, Mode, Provenance, Timings};
use retgen_core::neural::DecodeConfig;

/// Upper bounds on per-request decode overrides.
pub const MAX_DECODE_LEN: usize = 200;
pub const MAX_BEAM_WIDTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_width: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub query: String,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode: Option<DecodeOverrides>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateWire {
    pub text: String,
    pub provenance: Provenance,
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_pair_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingsWire {
    pub retrieve: f64,
    pub generate: f64,
    pub rerank: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponseWire {
    pub reply: String,
    pub provenance: Provenance,
    pub candidates: Vec<CandidateWire>,
    pub timings_ms: TimingsWire,
    pub model_versions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

/// Why a request body was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum RequestError {
    /// Unparseable body, missing or empty query: 400.
    BadRequest(String),
    /// Well-formed but unacceptable values: 422.
    Unprocessable(String),
}

impl ChatRequest {
    /// Parses a body, separating malformed requests from bad values.
    pub fn parse(body: &[u8]) -> Result<Self, RequestError> {
        let value: Value =
            serde_json::from_slice(body).map_err(|e| RequestError::BadRequest(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| RequestError::BadRequest("body must be a JSON object".into()))?;
        let query = match obj.get("query") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(RequestError::BadRequest("query must be a string".into())),
            None => return Err(RequestError::BadRequest("missing query".into())),
        };
        let mode = match obj.get("mode") {
            None | Some(Value::Null) => Mode::default(),
            Some(Value::String(s)) => s
                .parse()
                .map_err(|_| RequestError::Unprocessable(format!("unknown mode {s:?}")))?,
            Some(other) => return Err(RequestError::Unprocessable(format!("mode must be a string, got {other}"))),
        };
        let decode = match obj.get("decode") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                serde_json::from_value::<DecodeOverrides>(v.clone())
                    .map_err(|e| RequestError::Unprocessable(format!("decode: {e}")))?,
            ),
        };
        Ok(ChatRequest { query, mode, decode })
    }

    /// Applies overrides to `base`, rejecting out-of-range values.
    pub fn decode_config(&self, base: DecodeConfig) -> Result<DecodeConfig, RequestError> {
        let mut out = base;
        if let Some(d) = &self.decode {
            if let Some(n) = d.max_len {
                if !(1..=MAX_DECODE_LEN).contains(&n) {
                    return Err(RequestError::Unprocessable(format!(
                        "max_len must be in 1..={MAX_DECODE_LEN}"
                    )));
                }
                out.max_len = n;
            }
            if let Some(b) = d.beam_width {
                if !(1..=MAX_BEAM_WIDTH).contains(&b) {
                    return Err(RequestError::Unprocessable(format!(
                        "beam_width must be in 1..={MAX_BEAM_WIDTH}"
                    )));
                }
                out.beam_width = b;
            }
        }
        Ok(out)
    }
}

impl From<Timings> for TimingsWire {
    fn from(t: Timings) -> Self {
        TimingsWire {
            retrieve: t.retrieve_ms,
            generate: t.generate_ms,
            rerank: t.rerank_ms,
            total: t.total_ms,
        }
    }
}

impl ChatResponseWire {
    pub fn from_response(r: &ChatResponse, model_versions: BTreeMap<String, String>) -> Self {
        ChatResponseWire {
            reply: r.reply.to_string(),
            provenance: r.provenance,
            candidates: r
                .candidates
                .iter()
                .map(|c| CandidateWire {
                    text: c.reply.to_string(),
                    provenance: c.provenance,
                    score: c.score,
                    source_pair_id: c.source_pair_id,
                })
                .collect(),
            timings_ms: r.timings.into(),
            model_versions,
        }
    }

    /// Schema check used by contract tests: candidate count, provenance
    /// agreement and score range.
    pub fn validate(&self) -> Result<(), String> {
        match self.provenance {
            Provenance::Fallback => {
                if !self.candidates.is_empty() {
                    return Err("fallback response lists candidates".into());
                }
            }
            p => {
                if !(1..=2).contains(&self.candidates.len()) {
                    return Err(format!("{} candidates", self.candidates.len()));
                }
                if !self.candidates.iter().any(|c| c.provenance == p && c.text == self.reply) {
                    return Err("reply is not one of the candidates".into());
                }
            }
        }
        for c in &self.candidates {
            match c.score {
                Some(s) if s > 0.0 && s < 1.0 => {}
                other => return Err(format!("candidate score {other:?} outside (0, 1)")),
            }
            if (c.provenance == Provenance::Retrieved) != c.source_pair_id.is_some() {
                return Err("source_pair_id must be present exactly for retrieved candidates".into());
            }
            if c.provenance == Provenance::Fallback {
                return Err("fallback candidate".into());
            }
        }
        let t = &self.timings_ms;
        if [t.retrieve, t.generate, t.rerank, t.total].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err("bad timings".into());
        }
        Ok(())
    }
}
