//! Self-describing JSON checkpoint.
//!
//! ```text
//! {
//!   "format": "sursmr-checkpoint",
//!   "version": 1,
//!   "variant": "full",
//!   "config": { ...ModelConfig, including preprocessing mean/std... },
//!   "meta": { "step": 500, "seed": 7, "phase": "finetune" },
//!   "params": [ { "name": "backbone.stem.weight", "shape": [4, 3, 7, 7],
//!                 "data": "<base64 of little-endian f64 values>" }, ... ]
//! }
//! ```
//!
//! Parameters are listed in registration order; names are dot-separated paths.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Network, ParamStore, Variant};
use crate::tensor::Tensor;

pub const FORMAT: &str = "sursmr-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointMeta {
    pub step: usize,
    pub seed: u64,
    pub phase: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct Param {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    variant: Variant,
    config: ModelConfig,
    meta: CheckpointMeta,
    params: Vec<Param>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(name: &str, text: &str, len: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::CorruptCheckpoint(format!("{name}: {e}")))?;
    if bytes.len() != len * 8 {
        return Err(Error::CorruptCheckpoint(format!(
            "{name}: {} bytes for {len} values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn to_string(net: &Network, meta: &CheckpointMeta) -> Result<String> {
    let doc = Document {
        format: FORMAT.into(),
        version: VERSION,
        variant: net.variant(),
        config: net.config().clone(),
        meta: meta.clone(),
        params: net
            .store()
            .iter()
            .map(|(name, t)| Param {
                name: name.to_string(),
                shape: t.shape.clone(),
                data: encode(&t.data),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn from_str(text: &str) -> Result<(Network, CheckpointMeta)> {
    let header: Header =
        serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(format!("unreadable header: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::CorruptCheckpoint(format!("unexpected format tag {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: VERSION,
        });
    }
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    if doc.variant != doc.config.variant {
        return Err(Error::CorruptCheckpoint(format!(
            "variant {} disagrees with config variant {}",
            doc.variant, doc.config.variant
        )));
    }
    let mut store = ParamStore::new();
    for p in doc.params {
        let n = p.shape.iter().product();
        let data = decode(&p.name, &p.data, n)?;
        if store.id(&p.name).is_some() {
            return Err(Error::CorruptCheckpoint(format!("parameter {} listed twice", p.name)));
        }
        store.add(p.name, Tensor::new(p.shape, data));
    }
    let net = Network::with_params(doc.config, store)?;
    Ok((net, doc.meta))
}

pub fn save(path: &Path, net: &Network, meta: &CheckpointMeta) -> Result<()> {
    std::fs::write(path, to_string(net, meta)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Network, CheckpointMeta)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text)
}

/// Loads a checkpoint that must hold `variant`.
pub fn load_as(path: &Path, variant: Variant) -> Result<(Network, CheckpointMeta)> {
    let (net, meta) = load(path)?;
    if net.variant() != variant {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint holds variant {}, requested {variant}",
            net.variant()
        )));
    }
    Ok((net, meta))
}
