//! Self-describing weight bundles.
//!
//! Layout: the magic bytes `SEANCKPT`, a little-endian `u64` header length,
//! a JSON header, then every tensor as little-endian `f32` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sean_tensor::{ParamStore, Tensor};

use crate::data::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SEANCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub params: ParamStore<f32>,
}

pub fn encode(kind: &str, config: &serde_json::Value, params: &ParamStore<f32>) -> Vec<u8> {
    let tensors = params
        .entries()
        .iter()
        .map(|e| TensorInfo { name: e.name.clone(), shape: e.value.shape().to_vec(), trainable: e.trainable })
        .collect();
    let header = Header { format_version: FORMAT_VERSION, kind: kind.to_string(), config: config.clone(), tensors };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + params.entries().iter().map(|e| e.value.numel() * 4).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for e in params.entries() {
        for v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save(path: &Path, kind: &str, config: &serde_json::Value, params: &ParamStore<f32>) -> Result<()> {
    write_atomic(path, &encode(kind, config, params))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { msg, .. } => Error::format(path, msg),
        other => other,
    })
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |msg: &str| Error::format("<checkpoint>", msg.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (missing magic bytes)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format_version {} (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let mut params = ParamStore::new();
    let mut offset = 16 + hlen;
    for info in &header.tensors {
        let n: usize = info.shape.iter().product();
        let raw = bytes.get(offset..offset + 4 * n).ok_or_else(|| bad(&format!("truncated tensor {}", info.name)))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        params.add(info.name.clone(), Tensor::from_vec(info.shape.clone(), data), info.trainable);
        offset += 4 * n;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    Ok(Checkpoint { kind: header.kind, config: header.config, params })
}

impl Checkpoint {
    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }

    /// Copies every tensor into `target`, which must hold exactly the same
    /// names and shapes.
    pub fn restore_into(&self, target: &mut ParamStore<f32>) -> Result<()> {
        for entry in target.entries() {
            if self.params.id_of(&entry.name).is_none() {
                return Err(Error::Checkpoint(format!("checkpoint lacks tensor {}", entry.name)));
            }
        }
        for src in self.params.entries() {
            let id = target
                .id_of(&src.name)
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint tensor {} is unknown to the model", src.name)))?;
            let want = target.get(id).shape().to_vec();
            let have = src.value.shape();
            if want.len() != have.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {}: rank {} in checkpoint but model expects {} ({have:?} vs {want:?})",
                    src.name,
                    have.len(),
                    want.len()
                )));
            }
            if let Some(d) = (0..want.len()).find(|&d| want[d] != have[d]) {
                return Err(Error::Checkpoint(format!(
                    "tensor {}: dimension {d} is {} in checkpoint but model expects {} ({have:?} vs {want:?})",
                    src.name, have[d], want[d]
                )));
            }
            target.set(id, src.value.clone());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add("a.weight", Tensor::from_fn(vec![2, 3], |i| i as f32 * 0.5 - 1.0), true);
        s.add("a.running_mean", Tensor::from_vec(vec![2], vec![0.25, -3.0]), false);
        s
    }

    #[test]
    fn round_trip() {
        let s = store();
        let cfg = serde_json::json!({"width": 3});
        let ck = decode(&encode("unit", &cfg, &s)).unwrap();
        assert_eq!(ck.kind, "unit");
        assert_eq!(ck.config, cfg);
        let mut t = store();
        t.get_mut(t.id_of("a.weight").unwrap()).data_mut().fill(0.0);
        ck.restore_into(&mut t).unwrap();
        for (a, b) in s.entries().iter().zip(t.entries()) {
            assert_eq!(a.value, b.value);
            assert_eq!(a.trainable, b.trainable);
        }
    }

    #[test]
    fn shape_mismatch_names_dimension() {
        let ck = decode(&encode("unit", &serde_json::Value::Null, &store())).unwrap();
        let mut t = ParamStore::new();
        t.add("a.weight", Tensor::zeros(vec![2, 4]), true);
        t.add("a.running_mean", Tensor::zeros(vec![2]), false);
        let err = ck.restore_into(&mut t).unwrap_err().to_string();
        assert!(err.contains("dimension 1") && err.contains("a.weight"), "{err}");
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode(b"not a checkpoint at all").is_err());
        let mut bytes = encode("unit", &serde_json::Value::Null, &store());
        bytes.pop();
        assert!(decode(&bytes).is_err());
    }
}
