//! Binary parameter container.
//!
//! Layout: the 8-byte magic `SRPARAM1`, a little-endian u64 header length,
//! a JSON header `{config, tensors: [{name, shape}], vocab, provenance}`,
//! then every
//! tensor's values as little-endian f64 in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use crate::artifact::Header;
use crate::error::{Error, Result};
use crate::example_gen::Vocab;

pub const MAGIC: &[u8; 8] = b"SRPARAM1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ContainerHeader {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    vocab: Option<Vocab>,
    #[serde(default)]
    provenance: Option<Header>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedParams {
    pub params: ModelParams,
    pub vocab: Option<Vocab>,
    pub provenance: Option<Header>,
}

pub fn params_to_bytes(p: &ModelParams, vocab: Option<&Vocab>, provenance: Option<&Header>) -> Vec<u8> {
    let header = ContainerHeader {
        config: p.config,
        tensors: p
            .groups()
            .into_iter()
            .map(|(name, t)| TensorEntry {
                name,
                shape: t.shape.clone(),
            })
            .collect(),
        vocab: vocab.cloned(),
        provenance: provenance.cloned(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * p.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in p.groups() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<LoadedParams> {
    let bad = |m: &str| Error::SchemaViolation(format!("params container: {m}"));
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let len = u64::from_le_bytes(len) as usize;
    if r.len() < len {
        return Err(bad("truncated header"));
    }
    let header: ContainerHeader = serde_json::from_slice(&r[..len]).map_err(|e| bad(&e.to_string()))?;
    r = &r[len..];
    let mut params = ModelParams::init(header.config, 0)?.zeros_like();
    let groups = params.groups_mut();
    if groups.len() != header.tensors.len() {
        return Err(bad("tensor count does not match config"));
    }
    for ((name, t), entry) in groups.into_iter().zip(&header.tensors) {
        if name != entry.name || t.shape != entry.shape {
            return Err(Error::ShapeMismatch(format!("{} {:?} vs {name} {:?}", entry.name, entry.shape, t.shape)));
        }
        for v in t.data.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated tensor data"))?;
            *v = f64::from_le_bytes(b);
        }
    }
    if !r.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(LoadedParams {
        params,
        vocab: header.vocab,
        provenance: header.provenance,
    })
}

pub fn save_params(path: &Path, p: &ModelParams, vocab: Option<&Vocab>, provenance: Option<&Header>) -> Result<()> {
    let mut w = crate::artifact::create(path)?;
    w.write_all(&params_to_bytes(p, vocab, provenance)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<LoadedParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_bytes(&bytes)
}
