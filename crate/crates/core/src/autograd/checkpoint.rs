use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// One tensor's entry in a checkpoint manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the flat binary file.
    pub offset: usize,
}

/// Sidecar describing the layout of a flat little-endian `f64` checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tensors: Vec<TensorEntry>,
    /// Free-form metadata such as the model configuration.
    #[serde(default)]
    pub meta: serde_json::Value,
}

const FORMAT: &str = "f64-le-v1";

/// Write `params` as raw little-endian f64 values plus a JSON manifest.
pub fn save(params: &ParamStore, bin: &Path, manifest: &Path, meta: serde_json::Value) -> Result<()> {
    let mut bytes = Vec::with_capacity(params.num_values() * 8);
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        tensors.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), offset: bytes.len() });
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let m = Manifest { format: FORMAT.to_string(), tensors, meta };
    fs::write(bin, bytes)?;
    fs::write(manifest, serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

/// Read a checkpoint written by [`save`]; returns the parameters and manifest metadata.
pub fn load(bin: &Path, manifest: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let m: Manifest = serde_json::from_str(&fs::read_to_string(manifest)?)?;
    if m.format != FORMAT {
        return Err(Error::Parse(format!("unknown checkpoint format {}", m.format)));
    }
    let bytes = fs::read(bin)?;
    let mut store = ParamStore::new();
    for e in m.tensors {
        let n: usize = e.shape.iter().product();
        let end = e.offset + n * 8;
        if end > bytes.len() {
            return Err(Error::Parse(format!("tensor {} runs past end of checkpoint", e.name)));
        }
        let data = bytes[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.insert(e.name, Tensor::new(e.shape, data)?)?;
    }
    Ok((store, m.meta))
}
