//! Parameter checkpoints.
//!
//! Layout: the 8-byte magic `ZSELCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the UTF-8 JSON header, then every
//! tensor's values as little-endian `f64` in header order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"ZSELCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint: {0}")]
    Truncated(&'static str),
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint body holds {got} bytes, header declares {expected}")]
    BodyLength { expected: usize, got: usize },
    #[error("non-finite value in tensor `{0}`")]
    NonFinite(String),
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: serde_json::Value,
    solver_ids: Vec<String>,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus free-form metadata (model config) and the solver-id
/// order that fixes the meaning of score columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub solver_ids: Vec<String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(meta: serde_json::Value, solver_ids: Vec<String>, store: &ParamStore) -> Self {
        let tensors = store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        Self { meta, solver_ids, tensors }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            meta: self.meta.clone(),
            solver_ids: self.solver_ids.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| TensorEntry { name: n.clone(), shape: t.shape().to_vec() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let body: usize = self.tensors.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + json.len() + body);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 {
            return Err(CheckpointError::Truncated("magic"));
        }
        if &bytes[..8] != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = u32::from_le_bytes(bytes.get(8..12).ok_or(CheckpointError::Truncated("version"))?.try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hlen = u64::from_le_bytes(bytes.get(12..20).ok_or(CheckpointError::Truncated("header length"))?.try_into().unwrap());
        let rest = &bytes[20..];
        let hlen = usize::try_from(hlen)
            .ok()
            .filter(|&h| h <= rest.len())
            .ok_or(CheckpointError::Truncated("header"))?;
        let header: Header =
            serde_json::from_slice(&rest[..hlen]).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let body = &rest[hlen..];
        let mut expected = 0usize;
        for e in &header.tensors {
            if e.shape.is_empty() || e.shape.contains(&0) {
                return Err(CheckpointError::Header(format!("tensor `{}` has shape {:?}", e.name, e.shape)));
            }
            let n = e
                .shape
                .iter()
                .try_fold(1usize, |a, &s| a.checked_mul(s))
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| CheckpointError::Header(format!("tensor `{}` is too large", e.name)))?;
            expected = expected
                .checked_add(n)
                .ok_or_else(|| CheckpointError::Header("tensors too large".into()))?;
        }
        if expected != body.len() {
            return Err(CheckpointError::BodyLength { expected, got: body.len() });
        }
        let mut off = 0;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let data: Vec<f64> = body[off..off + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            off += 8 * n;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(CheckpointError::NonFinite(e.name));
            }
            let t = Tensor::new(e.shape, data).map_err(|err| CheckpointError::Header(err.to_string()))?;
            tensors.push((e.name, t));
        }
        Ok(Self { meta: header.meta, solver_ids: header.solver_ids, tensors })
    }

    /// Copies values into `store`; names and shapes must match exactly and
    /// in the same order.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<(), CheckpointError> {
        if self.tensors.len() != store.len() {
            return Err(CheckpointError::Mismatch(format!(
                "{} tensors in checkpoint, {} in model",
                self.tensors.len(),
                store.len()
            )));
        }
        let ids: Vec<_> = store.ids().collect();
        for ((name, t), id) in self.tensors.iter().zip(ids) {
            if store.name(id) != name || store.get(id).shape() != t.shape() {
                return Err(CheckpointError::Mismatch(format!(
                    "`{name}` {:?} vs `{}` {:?}",
                    t.shape(),
                    store.name(id),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}
