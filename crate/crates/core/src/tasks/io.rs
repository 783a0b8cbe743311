//! RLND dataset files.
//!
//! Layout (all little-endian): `"RLND"`, version u32, algebra name (u32
//! length + UTF-8), n u32, K u32, inputs_per_sample u32, channels u32,
//! target_dim u32, N u64, seed u64, target mean f64, target std f64, inputs
//! `[N, inputs_per_sample, K]` f64, targets `[N, target_dim]` f64, CRC-32 of
//! everything before it.

use std::path::Path;

use ndarray::{Array2, Array3};

use super::Dataset;
use crate::error::{RelnError, Result};
use crate::layers::serialize::checked_body;
use crate::liealg::AlgebraKind;

pub const DATASET_MAGIC: &[u8; 4] = b"RLND";
pub const DATASET_VERSION: u32 = 1;

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| RelnError::Format(format!("{what} does not fit in u32")))
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let (n, p, k) = ds.inputs.dim();
    let name = ds.algebra.name();
    let mut out = Vec::with_capacity(80 + 8 * (ds.inputs.len() + ds.targets.len()));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(name.len(), "name length")?.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    for v in [ds.algebra.n(), k, p, ds.channels, ds.target_dim()] {
        out.extend_from_slice(&to_u32(v, "header field")?.to_le_bytes());
    }
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&ds.seed.to_le_bytes());
    out.extend_from_slice(&ds.target_mean.to_le_bytes());
    out.extend_from_slice(&ds.target_std.to_le_bytes());
    for v in ds.inputs.iter().chain(ds.targets.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| RelnError::Format("truncated dataset".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| RelnError::Format("dataset too large".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let body = checked_body(bytes, DATASET_MAGIC, DATASET_VERSION)?;
    let mut c = Cursor { bytes: body, pos: 8 };
    let name_len = c.u32()?;
    let name = std::str::from_utf8(c.take(name_len)?)
        .map_err(|_| RelnError::Format("algebra name is not UTF-8".into()))?
        .to_string();
    let n = c.u32()?;
    let k = c.u32()?;
    let p = c.u32()?;
    let channels = c.u32()?;
    let target_dim = c.u32()?;
    let count = usize::try_from(c.u64()?).map_err(|_| RelnError::Format("sample count overflows".into()))?;
    let seed = c.u64()?;
    let target_mean = c.f64()?;
    let target_std = c.f64()?;
    let algebra = AlgebraKind::parse(&name, Some(n))?;
    if algebra.n() != n || algebra.dim() != k {
        return Err(RelnError::Format(format!("header algebra {name} disagrees with n = {n}, K = {k}")));
    }
    let input_len = count
        .checked_mul(p)
        .and_then(|v| v.checked_mul(k))
        .ok_or_else(|| RelnError::Format("input tensor too large".into()))?;
    let inputs = Array3::from_shape_vec((count, p, k), c.floats(input_len)?)
        .map_err(|e| RelnError::Format(e.to_string()))?;
    let target_len = count
        .checked_mul(target_dim)
        .ok_or_else(|| RelnError::Format("target tensor too large".into()))?;
    let targets = Array2::from_shape_vec((count, target_dim), c.floats(target_len)?)
        .map_err(|e| RelnError::Format(e.to_string()))?;
    if c.pos != body.len() {
        return Err(RelnError::Format("trailing bytes in dataset".into()));
    }
    let ds = Dataset { algebra, channels, inputs, targets, seed, target_mean, target_std };
    ds.validate()?;
    Ok(ds)
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<u32> {
    let bytes = encode_dataset(ds)?;
    std::fs::write(path, &bytes)?;
    Ok(u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes")))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&std::fs::read(path)?)
}
