//! The RLNM model payload.
//!
//! Layout: `"RLNM"`, version (u32 LE), descriptor length (u32 LE), UTF-8 JSON
//! descriptor, every tensor as f64 LE in declaration order, then a CRC-32 (u32
//! LE) of all preceding bytes. Checkpoints append extra tensors (optimizer
//! state) after the parameters and record them in the descriptor.

use serde::{Deserialize, Serialize};

use super::model::{LayerSpec, Model, ModelSpec};
use crate::error::{RelnError, Result};
use crate::forms::FormKind;
use crate::liealg::AlgebraKind;
use crate::linalg::Matrix;

pub const MODEL_MAGIC: &[u8; 4] = b"RLNM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    algebra: String,
    n: usize,
    form: FormKind,
    input_channels: usize,
    set_size: usize,
    layers: Vec<LayerSpec>,
    head_hidden: Vec<usize>,
    output_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_affine: Option<[f64; 2]>,
    tensors: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extra_tensors: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<serde_json::Value>,
}

/// Extra checkpoint content stored alongside the parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub state: Option<serde_json::Value>,
    pub tensors: Vec<Matrix>,
}

pub fn serialize_model(model: &Model) -> Result<Vec<u8>> {
    serialize_checkpoint(model, &Checkpoint::default())
}

pub fn serialize_checkpoint(model: &Model, extra: &Checkpoint) -> Result<Vec<u8>> {
    let spec = model.spec();
    let descriptor = Descriptor {
        algebra: spec.algebra.name(),
        n: spec.algebra.n(),
        form: spec.form,
        input_channels: spec.input_channels,
        set_size: spec.set_size,
        layers: spec.layers.clone(),
        head_hidden: spec.head_hidden.clone(),
        output_dim: spec.output_dim,
        target_affine: spec.target_affine,
        tensors: model.params.iter().map(|p| [p.nrows(), p.ncols()]).collect(),
        extra_tensors: extra.tensors.iter().map(|p| [p.nrows(), p.ncols()]).collect(),
        state: extra.state.clone(),
    };
    let json = serde_json::to_vec(&descriptor).map_err(|e| RelnError::Format(e.to_string()))?;
    let json_len = u32::try_from(json.len())
        .map_err(|_| RelnError::Format("descriptor too large".into()))?;
    let n_values: usize = model.params.iter().chain(&extra.tensors).map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * n_values);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&json_len.to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.params.iter().chain(&extra.tensors) {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn deserialize_model(bytes: &[u8]) -> Result<Model> {
    deserialize_checkpoint(bytes).map(|(m, _)| m)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| RelnError::Format("truncated payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn matrix(&mut self, shape: [usize; 2]) -> Result<Matrix> {
        let len = shape[0]
            .checked_mul(shape[1])
            .ok_or_else(|| RelnError::Format("tensor shape overflows".into()))?;
        let raw = self.take(len.checked_mul(8).ok_or_else(|| RelnError::Format("tensor too large".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::from_shape_vec((shape[0], shape[1]), values).map_err(|e| RelnError::Format(e.to_string()))
    }
}

/// Verifies magic and CRC, returning the body without the trailing checksum.
pub(crate) fn checked_body<'a>(bytes: &'a [u8], magic: &[u8; 4], version: u32) -> Result<&'a [u8]> {
    if bytes.len() < 12 {
        return Err(RelnError::Format("truncated payload".into()));
    }
    if &bytes[..4] != magic {
        return Err(RelnError::Format(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if found != version {
        return Err(RelnError::Version(found));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(RelnError::Checksum { stored, computed });
    }
    Ok(body)
}

pub fn deserialize_checkpoint(bytes: &[u8]) -> Result<(Model, Checkpoint)> {
    let body = checked_body(bytes, MODEL_MAGIC, MODEL_VERSION)?;
    let mut r = Reader { bytes: body, pos: 8 };
    let json_len = r.u32()? as usize;
    let descriptor: Descriptor =
        serde_json::from_slice(r.take(json_len)?).map_err(|e| RelnError::Format(e.to_string()))?;
    let algebra = AlgebraKind::parse(&descriptor.algebra, Some(descriptor.n))?;
    if algebra.n() != descriptor.n {
        return Err(RelnError::Format("algebra name and n disagree".into()));
    }
    let spec = ModelSpec {
        algebra,
        form: descriptor.form,
        input_channels: descriptor.input_channels,
        set_size: descriptor.set_size,
        layers: descriptor.layers,
        head_hidden: descriptor.head_hidden,
        output_dim: descriptor.output_dim,
        target_affine: descriptor.target_affine,
    };
    let params = descriptor.tensors.iter().map(|s| r.matrix(*s)).collect::<Result<Vec<_>>>()?;
    let tensors = descriptor.extra_tensors.iter().map(|s| r.matrix(*s)).collect::<Result<Vec<_>>>()?;
    if r.pos != body.len() {
        return Err(RelnError::Format("trailing bytes after tensors".into()));
    }
    let model = Model::new(spec, params)?;
    Ok((model, Checkpoint { state: descriptor.state, tensors }))
}

pub fn save_model(model: &Model, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, serialize_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &std::path::Path) -> Result<Model> {
    deserialize_model(&std::fs::read(path)?)
}
