//! Binary checkpoint archive.
//!
//! Layout: `b"PLCK"`, `u32` format version, `u64` manifest length, the UTF-8
//! JSON manifest, then every tensor's data as little-endian `f32` in manifest
//! order. All integers are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PLCK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self { name: name.into(), shape, data }
    }

    fn expected_len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    dtype: String,
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<Tensor>,
}

/// A named set of tensors plus free-form metadata describing how to rebuild
/// the model (`kind` selects the loader).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint archive (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("tensor `{name}`: shape wants {expected} values, archive has {got}")]
    Shape { name: String, expected: usize, got: usize },
    #[error("missing tensor `{0}`")]
    Missing(String),
    #[error("wrong checkpoint kind: expected `{expected}`, found `{found}`")]
    Kind { expected: String, found: String },
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self { kind: kind.into(), meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        self.tensors.push(Tensor::new(name, shape, data));
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.tensors.iter().find(|t| t.name == name).ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(CheckpointError::Kind { expected: kind.to_string(), found: self.kind.clone() })
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), CheckpointError> {
        for t in &self.tensors {
            if t.expected_len() != t.data.len() {
                return Err(CheckpointError::Shape { name: t.name.clone(), expected: t.expected_len(), got: t.data.len() });
            }
        }
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            dtype: "f32-le".to_string(),
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self.tensors.clone(),
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for t in &self.tensors {
            let mut buf = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let manifest: Manifest = serde_json::from_slice(&json).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        if manifest.dtype != "f32-le" {
            return Err(CheckpointError::Manifest(format!("unsupported dtype {}", manifest.dtype)));
        }
        let mut tensors = manifest.tensors;
        for t in &mut tensors {
            let n = t.expected_len();
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf).map_err(|_| CheckpointError::Shape { name: t.name.clone(), expected: n, got: 0 })?;
            t.data = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(CheckpointError::Manifest(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self { kind: manifest.kind, meta: manifest.meta, tensors })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut v = Vec::new();
        self.write_to(&mut v)?;
        Ok(v)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        Self::read_from(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
