//! `KGE1` checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"KGE1"
//! u64      header length in bytes
//! [u8]     UTF-8 JSON header: spec, entity/relation counts, tensor manifest
//! f32...   tensors in manifest order, each row-major
//! ```
//!
//! Relation tensors use the segment layout `[r]`, `[r_h | r_t]` or
//! `[r_h | r_m | r_t]` depending on the model kind.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};
use crate::models::ModelSpec;

pub const MAGIC: &[u8; 4] = b"KGE1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub num_entities: usize,
    pub num_relations: usize,
    /// Relation segment names in storage order.
    pub relation_layout: Vec<String>,
    /// Optimizer steps taken.
    pub step: u64,
    /// Run configuration the tensors were produced with.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Tensor {
            name: name.into(),
            shape,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<Tensor>,
}

pub fn relation_layout(spec: &ModelSpec) -> Vec<String> {
    use crate::models::ModelKind::*;
    let names: &[&str] = match spec.kind {
        TransE => &["r"],
        PairRE => &["r_h", "r_t"],
        TripleREv1 | TripleREv2 => &["r_h", "r_m", "r_t"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| KgeError::Checkpoint(format!("missing tensor {name:?}")))
    }

    pub fn has_tensor(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = self.header.clone();
        header.tensors = self
            .tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect();
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(KgeError::Checkpoint(format!(
                    "tensor {:?} has shape {:?} but {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
        }
        let json = serde_json::to_vec(&header)?;
        let payload: usize = self.tensors.iter().map(|t| t.data.len() * 4).sum();
        let mut out = Vec::with_capacity(12 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = bytes;
        let mut magic = [0u8; 4];
        reader
            .read_exact(&mut magic)
            .map_err(|_| KgeError::Checkpoint("truncated magic".into()))?;
        if &magic != MAGIC {
            return Err(KgeError::Checkpoint(format!("bad magic {magic:?}")));
        }
        let mut len = [0u8; 8];
        reader
            .read_exact(&mut len)
            .map_err(|_| KgeError::Checkpoint("truncated header length".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if reader.len() < len {
            return Err(KgeError::Checkpoint("truncated header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&reader[..len])?;
        reader = &reader[len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            if reader.len() < n * 4 {
                return Err(KgeError::Checkpoint(format!("truncated tensor {:?}", entry.name)));
            }
            let data = reader[..n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            reader = &reader[n * 4..];
            tensors.push(Tensor::new(entry.name.clone(), entry.shape.clone(), data));
        }
        if !reader.is_empty() {
            return Err(KgeError::Checkpoint(format!("{} trailing bytes", reader.len())));
        }
        Ok(Checkpoint { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let file = fs::File::create(path).map_err(|e| KgeError::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).map_err(|e| KgeError::io(path, e))?;
        w.flush().map_err(|e| KgeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| KgeError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
