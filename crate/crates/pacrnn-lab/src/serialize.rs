//! Parameter files.
//!
//! ```text
//! offset  size  content
//! 0       8     magic, ASCII "PACRNNMD"
//! 8       4     format version, u32 LE (currently 1)
//! 12      8     manifest length M in bytes, u64 LE
//! 20      M     manifest, UTF-8 JSON
//! 20+M    ...   every tensor listed in the manifest, in manifest order,
//!               row-major f64 LE
//! ```
//!
//! The manifest is `{"kind": ..., "config": ..., "layers": [...]}` where each
//! layer entry is `{"name", "kind", "tensors": [{"name", "shape"}]}`. Readers
//! check every shape against the structure rebuilt from `config` before
//! accepting the payload.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 8] = b"PACRNNMD";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub kind: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub config: Value,
    pub layers: Vec<LayerEntry>,
}

impl Manifest {
    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        self.layers.iter().flat_map(|l| l.tensors.iter().map(|t| t.shape.clone())).collect()
    }
}

/// Builder for layer entries.
pub(crate) fn layer(name: impl Into<String>, kind: &str, tensors: &[(&str, &Tensor)]) -> LayerEntry {
    LayerEntry {
        name: name.into(),
        kind: kind.to_string(),
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry { name: n.to_string(), shape: t.shape().to_vec() })
            .collect(),
    }
}

pub fn encode(manifest: &Manifest, tensors: &[&Tensor]) -> Result<Vec<u8>> {
    let shapes = manifest.tensor_shapes();
    if shapes.len() != tensors.len() || shapes.iter().zip(tensors).any(|(s, t)| s.as_slice() != t.shape()) {
        return Err(Error::State("manifest does not describe the tensors being written".into()));
    }
    let json = serde_json::to_vec(manifest).map_err(|e| Error::Config(e.to_string()))?;
    let payload: usize = tensors.iter().map(|t| t.len() * 8).sum();
    let mut out = Vec::with_capacity(20 + json.len() + payload);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Manifest, Vec<Tensor>)> {
    if bytes.len() < 20 {
        return Err(Error::format(bytes.len() as u64, "file shorter than the 20-byte header"));
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(Error::format(0, "bad model magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::format(8, format!("unsupported model version {}", version)));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() < 20 + len {
        return Err(Error::format(20, format!("manifest of {} bytes truncated", len)));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[20..20 + len])
        .map_err(|e| Error::format(20, format!("manifest is not valid JSON: {}", e)))?;
    let mut pos = 20 + len;
    let mut tensors = Vec::new();
    for shape in manifest.tensor_shapes() {
        let n: usize = shape.iter().product();
        if bytes.len() - pos < n * 8 {
            return Err(Error::format(pos as u64, format!("tensor {:?} truncated", shape)));
        }
        let data = bytes[pos..pos + n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
        pos += n * 8;
    }
    if pos != bytes.len() {
        return Err(Error::format(pos as u64, "trailing bytes after last tensor"));
    }
    Ok((manifest, tensors))
}

pub fn write_file(path: impl AsRef<Path>, manifest: &Manifest, tensors: &[&Tensor]) -> Result<()> {
    std::fs::write(path, encode(manifest, tensors)?)?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<(Manifest, Vec<Tensor>)> {
    decode(&std::fs::read(path)?)
}

/// Copies decoded tensors into a freshly built structure after checking shapes.
pub(crate) fn load_into(targets: Vec<&mut Tensor>, tensors: Vec<Tensor>) -> Result<()> {
    if targets.len() != tensors.len() {
        return Err(Error::format(0, format!("expected {} tensors, file has {}", targets.len(), tensors.len())));
    }
    for (i, (dst, src)) in targets.into_iter().zip(tensors).enumerate() {
        if dst.shape() != src.shape() {
            return Err(Error::format(
                0,
                format!("tensor {} has shape {:?}, configuration implies {:?}", i, src.shape(), dst.shape()),
            ));
        }
        *dst = src;
    }
    Ok(())
}
