//! Self-describing checkpoint container: `BABELCKP`, a little-endian u64
//! header length, a JSON header, then every tensor as little-endian f64 in
//! layout order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{Layout, Model};
use super::ModelError;
use crate::util::{sha256_hex, write_atomic};

const MAGIC: &[u8; 8] = b"BABELCKP";
const FORMAT_VERSION: u32 = 1;

/// Position of the data-sampling generator when the checkpoint was written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// Optimizer step within the run that wrote this checkpoint.
    pub step: u64,
    /// Steps across every run in this model's lineage.
    pub total_steps: u64,
    pub rng_state: RngState,
    pub trained_tokens: BTreeMap<String, u64>,
    pub vocab_hash: String,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    step: u64,
    total_steps: u64,
    rng_state: RngState,
    trained_tokens: BTreeMap<String, u64>,
    vocab_hash: String,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

impl Checkpoint {
    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: Vec<u8> = self.model.params.iter().flat_map(|p| p.to_le_bytes()).collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.model.config,
            step: self.step,
            total_steps: self.total_steps,
            rng_state: self.rng_state,
            trained_tokens: self.trained_tokens.clone(),
            vocab_hash: self.vocab_hash.clone(),
            tensors: self
                .model
                .layout
                .tensors
                .iter()
                .map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() })
                .collect(),
            payload_sha256: sha256_hex(&payload),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| ModelError::Format(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad("unsupported format version"));
        }
        header.config.validate()?;
        let layout = Layout::new(&header.config);
        let declared: Vec<(&str, &[usize])> = header.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
        let expected: Vec<(&str, &[usize])> = layout.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
        if declared != expected {
            return Err(bad("tensor table does not match config"));
        }
        let payload = &body[hlen..];
        if payload.len() != layout.total * 8 {
            return Err(bad("payload size does not match config"));
        }
        if sha256_hex(payload) != header.payload_sha256 {
            return Err(bad("payload hash mismatch"));
        }
        let params: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Ok(Checkpoint {
            model: Model::from_params(header.config, params),
            step: header.step,
            total_steps: header.total_steps,
            rng_state: header.rng_state,
            trained_tokens: header.trained_tokens,
            vocab_hash: header.vocab_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        if !self.model.is_finite() {
            return Err(ModelError::Format("refusing to save non-finite parameters".into()));
        }
        write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
