//! Model checkpoint files.
//!
//! Layout: 8-byte magic, little-endian u32 header length, JSON header
//! (kind, architecture descriptor, provenance, tensor directory), the raw
//! f32 little-endian tensor data in directory order, and a trailing SHA-256
//! digest of everything before it. The JSON header keeps checkpoints
//! self-describing; the digest catches truncation and bit rot.

use crate::{Error, Result};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 8] = b"MSGZCKP1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    arch: serde_json::Value,
    provenance: serde_json::Value,
    tensors: Vec<TensorMeta>,
}

/// A named weight or buffer array.
#[derive(Debug, Clone)]
pub struct NamedTensor {
    pub name: String,
    pub data: ArrayD<f32>,
}

/// In-memory checkpoint: everything needed to rebuild and audit a model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Model family tag, e.g. "aeri" or "gaze".
    pub kind: String,
    /// Architecture descriptor (model-defined JSON).
    pub arch: serde_json::Value,
    /// Free-form provenance: seed, config hash, epoch log, upstream hashes.
    pub provenance: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(kind: &str, arch: serde_json::Value, provenance: serde_json::Value) -> Self {
        Self { kind: kind.to_owned(), arch, provenance, tensors: Vec::new() }
    }

    pub fn tensor(&self, name: &str) -> Result<&ArrayD<f32>> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.data)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    /// SHA-256 over names, shapes, and raw values of all tensors, in order.
    /// Stable across save/load; used to prove weights stayed frozen.
    pub fn weights_checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tensors {
            h.update(t.name.as_bytes());
            h.update([0u8]);
            for d in t.data.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            arch: self.arch.clone(),
            provenance: self.provenance.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorMeta { name: t.name.clone(), shape: t.data.shape().to_vec() })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header)
            .map_err(|e| Error::Checkpoint(format!("serialize header: {e}")))?;
        let mut buf = Vec::with_capacity(header_json.len() + 64);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header_json);
        for t in &self.tensors {
            // Iterate logical order so layout is independent of striding.
            for v in t.data.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
        let fail = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
        if buf.len() < MAGIC.len() + 4 + 32 {
            return Err(fail("file too short"));
        }
        if &buf[..8] != MAGIC {
            return Err(fail("bad magic (not a checkpoint file)"));
        }
        let (body, digest) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(fail("integrity digest mismatch (corrupt or truncated)"));
        }
        let header_len = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
        if body.len() < 12 + header_len {
            return Err(fail("header overruns file"));
        }
        let header: Header = serde_json::from_slice(&body[12..12 + header_len])
            .map_err(|e| fail(&format!("header parse: {e}")))?;
        let mut offset = 12 + header_len;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for meta in &header.tensors {
            let count: usize = meta.shape.iter().product();
            let bytes = count * 4;
            if body.len() < offset + bytes {
                return Err(fail(&format!("tensor {} overruns file", meta.name)));
            }
            let mut values = Vec::with_capacity(count);
            for chunk in body[offset..offset + bytes].chunks_exact(4) {
                values.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
            offset += bytes;
            let data = ArrayD::from_shape_vec(meta.shape.clone(), values)
                .map_err(|e| fail(&format!("tensor {}: {e}", meta.name)))?;
            tensors.push(NamedTensor { name: meta.name.clone(), data });
        }
        if offset != body.len() {
            return Err(fail("trailing bytes after tensor data"));
        }
        Ok(Self { kind: header.kind, arch: header.arch, provenance: header.provenance, tensors })
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a byte string, hex-encoded. Used for config hashes and
/// provenance stamps.
pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    fn sample() -> Checkpoint {
        let mut ckpt = Checkpoint::new(
            "aeri",
            serde_json::json!({"width": 0.5}),
            serde_json::json!({"seed": 3}),
        );
        ckpt.tensors.push(NamedTensor {
            name: "enc1.conv1.w".into(),
            data: ArrayD::from_shape_vec(vec![2, 1, 3, 3], (0..18).map(|i| i as f32 * 0.25).collect())
                .unwrap(),
        });
        ckpt.tensors.push(NamedTensor {
            name: "enc1.conv1.b".into(),
            data: ArrayD::from_shape_vec(vec![2], vec![-1.5, 2.5]).unwrap(),
        });
        ckpt
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.kind, "aeri");
        assert_eq!(back.arch, ckpt.arch);
        assert_eq!(back.provenance, ckpt.provenance);
        assert_eq!(back.tensors.len(), 2);
        assert_eq!(back.tensor("enc1.conv1.w").unwrap(), ckpt.tensor("enc1.conv1.w").unwrap());
        assert_eq!(back.weights_checksum(), ckpt.weights_checksum());
    }

    #[test]
    fn checksum_changes_with_any_weight() {
        let ckpt = sample();
        let mut other = ckpt.clone();
        other.tensors[0].data[[0, 0, 0, 0]] += 1e-6;
        assert_ne!(ckpt.weights_checksum(), other.weights_checksum());
    }

    #[test]
    fn corruption_detected() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ckpt.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        match Checkpoint::load(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("integrity"), "{msg}"),
            other => panic!("expected integrity failure, got {other:?}"),
        }
    }

    #[test]
    fn non_checkpoint_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not.ckpt");
        std::fs::write(&path, b"PNG or whatever").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn missing_tensor_is_an_error() {
        let ckpt = sample();
        assert!(ckpt.tensor("nope").is_err());
    }
}
