//! Run manifests: what a command read, what it wrote and how long it took.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    /// Hash of `blob <len>\0<content>`, as git forms object ids.
    pub blob: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub inputs: Vec<InputFile>,
    /// Hash over the sorted `(path, blob)` list.
    pub input_hash: String,
    pub timings: BTreeMap<String, f64>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

/// Hashes every regular file in `paths`; directories contribute their
/// direct children in name order.
pub fn hash_inputs(paths: &[&Path]) -> Result<(Vec<InputFile>, String)> {
    let mut files = Vec::new();
    for &p in paths {
        if p.is_dir() {
            let mut children: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|c| c.is_file())
                .collect();
            children.sort();
            files.extend(children);
        } else {
            files.push(p.to_path_buf());
        }
    }
    let mut inputs = Vec::with_capacity(files.len());
    for f in files {
        let content = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
        inputs.push(InputFile {
            blob: blob_hash(&content),
            path: f,
        });
    }
    inputs.sort_by(|a, b| a.path.cmp(&b.path));
    let mut tree = Sha256::new();
    for i in &inputs {
        tree.update(i.path.to_string_lossy().as_bytes());
        tree.update([0]);
        tree.update(i.blob.as_bytes());
        tree.update(b"\n");
    }
    Ok((inputs, hex(&tree.finalize())))
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
