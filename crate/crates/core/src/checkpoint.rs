//! Binary container for named tensors with a JSON header.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, UTF-8
//! JSON header, then every tensor's values as little-endian `f64` in index
//! order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::numcore::Tensor;

pub const MAGIC: &[u8; 8] = b"EVNCKPT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("tensor {name}: {message}")]
    Tensor { name: String, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: Value,
    tensors: Vec<TensorEntry>,
}

/// Decoded checkpoint: caller-defined metadata plus named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub meta: Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn take(&mut self, name: &str) -> Option<Tensor> {
        let k = self.tensors.iter().position(|(n, _)| n == name)?;
        Some(self.tensors.remove(k).1)
    }

    /// Removes and returns every tensor whose name starts with `prefix`,
    /// with the prefix stripped.
    pub fn take_prefixed(&mut self, prefix: &str) -> Vec<(String, Tensor)> {
        let (hit, rest): (Vec<_>, Vec<_>) = self.tensors.drain(..).partition(|(n, _)| n.starts_with(prefix));
        self.tensors = rest;
        hit.into_iter().map(|(n, t)| (n[prefix.len()..].to_string(), t)).collect()
    }
}

pub fn encode(meta: &Value, tensors: &[(String, &Tensor)]) -> Result<Vec<u8>, CheckpointError> {
    let header = Header {
        meta: meta.clone(),
        tensors: tensors.iter().map(|(n, t)| TensorEntry { name: n.clone(), shape: t.shape().to_vec() }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let payload: usize = tensors.iter().map(|(_, t)| t.len() * 8).sum();
    let mut out = Vec::with_capacity(20 + json.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in tensors {
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Container, CheckpointError> {
    if bytes.len() < 20 {
        return Err(if bytes.starts_with(MAGIC) { CheckpointError::Truncated } else { CheckpointError::Magic });
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < hlen {
        return Err(CheckpointError::Truncated);
    }
    let header: Header = serde_json::from_slice(&body[..hlen])?;
    let mut rest = &body[hlen..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        if rest.len() < n * 8 {
            return Err(CheckpointError::Truncated);
        }
        let data = rest[..n * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        rest = &rest[n * 8..];
        let t = Tensor::new(e.shape, data)
            .map_err(|err| CheckpointError::Tensor { name: e.name.clone(), message: err.to_string() })?;
        tensors.push((e.name, t));
    }
    if !rest.is_empty() {
        return Err(CheckpointError::Tensor { name: String::new(), message: "trailing bytes after payload".into() });
    }
    Ok(Container { meta: header.meta, tensors })
}

pub fn write(path: &Path, meta: &Value, tensors: &[(String, &Tensor)]) -> Result<(), CheckpointError> {
    let bytes = encode(meta, tensors)?;
    fs::write(path, bytes).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn read(path: &Path) -> Result<Container, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> (Value, Vec<(String, Tensor)>) {
        let a = Tensor::from_rows(&[[1.0, -0.0], [f64::MIN_POSITIVE, 1e300]]);
        let b = Tensor::row_vector(&[0.1, 0.2, 0.30000000000000004]);
        (json!({"hidden": 4, "name": "x"}), vec![("a".into(), a), ("b".into(), b)])
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (meta, ts) = sample();
        let refs: Vec<(String, &Tensor)> = ts.iter().map(|(n, t)| (n.clone(), t)).collect();
        let bytes = encode(&meta, &refs).unwrap();
        let c = decode(&bytes).unwrap();
        assert_eq!(c.meta, meta);
        for ((n1, t1), (n2, t2)) in c.tensors.iter().zip(&ts) {
            assert_eq!(n1, n2);
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t1), bits(t2));
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let (meta, ts) = sample();
        let refs: Vec<(String, &Tensor)> = ts.iter().map(|(n, t)| (n.clone(), t)).collect();
        let bytes = encode(&meta, &refs).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated)));
        assert!(matches!(decode(b"hello world, not a checkpoint"), Err(CheckpointError::Magic)));
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(decode(&v), Err(CheckpointError::Version(9))));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    #[test]
    fn prefixed_take() {
        let (meta, ts) = sample();
        let mut c = Container { meta, tensors: ts };
        c.tensors.push(("q.w1".into(), Tensor::zeros(&[1])));
        let q = c.take_prefixed("q.");
        assert_eq!(q[0].0, "w1");
        assert_eq!(c.tensors.len(), 2);
        assert!(c.take("a").is_some());
        assert!(c.take("a").is_none());
    }
}
