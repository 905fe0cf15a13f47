//! Single-file parameter checkpoints.
//!
//! Layout: one line of compact JSON (the header) terminated by `\n`,
//! followed by the payload: every tensor's values as little-endian `f64`,
//! concatenated in header order. Header `offset`/`len` count `f64`
//! elements from the start of the payload.
//!
//! Adam moments, when saved, are stored as extra tensors named
//! `adam.m/<param>` and `adam.v/<param>`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adam::{AdamConfig, AdamState};
use crate::error::{AdError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const FORMAT: &str = "dsse-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    step: u64,
    hyperparameters: Option<AdamConfig>,
    tensors: Vec<TensorEntry>,
    metadata: Value,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub adam: Option<AdamState>,
    pub metadata: Value,
}

pub fn to_bytes(params: &ParamStore, adam: Option<&AdamState>, metadata: &Value) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut payload: Vec<f64> = Vec::new();
    let mut push = |name: String, t: &Tensor, payload: &mut Vec<f64>| {
        entries.push(TensorEntry { name, shape: t.shape().to_vec(), offset: payload.len(), len: t.len() });
        payload.extend_from_slice(t.data());
    };
    for (_, name, t) in params.iter() {
        push(name.to_string(), t, &mut payload);
    }
    if let Some(adam) = adam {
        for ((_, name, _), (m, v)) in params.iter().zip(adam.first.iter().zip(&adam.second)) {
            push(format!("adam.m/{name}"), m, &mut payload);
            push(format!("adam.v/{name}"), v, &mut payload);
        }
    }
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        step: adam.map_or(0, |a| a.step),
        hyperparameters: adam.map(|a| a.config),
        tensors: entries,
        metadata: metadata.clone(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(bytes)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| AdError::Checkpoint("missing header terminator".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..split])?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(AdError::Checkpoint(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let payload = &bytes[split + 1..];
    if payload.len() % 8 != 0 {
        return Err(AdError::Checkpoint("payload is not a whole number of f64 values".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    let mut params = ParamStore::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for e in &header.tensors {
        let end = e.offset + e.len;
        if end > values.len() {
            return Err(AdError::Checkpoint(format!("tensor {} overruns payload", e.name)));
        }
        let t = Tensor::new(e.shape.clone(), values[e.offset..end].to_vec())?;
        if let Some(_rest) = e.name.strip_prefix("adam.m/") {
            first.push(t);
        } else if let Some(_rest) = e.name.strip_prefix("adam.v/") {
            second.push(t);
        } else {
            params.add(e.name.clone(), t)?;
        }
    }
    let adam = match header.hyperparameters {
        Some(config) if first.len() == params.len() && second.len() == params.len() => {
            Some(AdamState { config, first, second, step: header.step })
        }
        Some(_) if !first.is_empty() => {
            return Err(AdError::Checkpoint("incomplete optimizer moments".into()));
        }
        _ => None,
    };
    Ok(Checkpoint { params, adam, metadata: header.metadata })
}

pub fn save(path: &Path, params: &ParamStore, adam: Option<&AdamState>, metadata: &Value) -> Result<()> {
    fs::write(path, to_bytes(params, adam, metadata)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?)
}
