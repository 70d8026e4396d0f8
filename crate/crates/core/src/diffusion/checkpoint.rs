//! Binary model checkpoints.
//!
//! Layout: the magic bytes `MLDM`, a little-endian `u32` format version, a
//! `u32` header length, a JSON header (model config, dtype, parameter names
//! and shapes) and then every parameter's values as little-endian `f32` or
//! `f64` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{DenoiserModel, ModelConfig};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"MLDM";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn of<T: Real>() -> Self {
        if std::mem::size_of::<T>() == 4 {
            Dtype::F32
        } else {
            Dtype::F64
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    dtype: Dtype,
    params: Vec<ParamEntry>,
}

pub fn to_bytes<T: Real>(model: &DenoiserModel<T>) -> Vec<u8> {
    let dtype = Dtype::of::<T>();
    let mut params = Vec::new();
    let mut data = Vec::new();
    model.clone().visit(&mut |name, p| {
        params.push(ParamEntry {
            name: name.to_string(),
            shape: p.shape.clone(),
        });
        for v in &p.value {
            match dtype {
                Dtype::F32 => data.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes()),
                Dtype::F64 => data.extend_from_slice(&v.to_f64_lossy().to_le_bytes()),
            }
        }
    });
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        dtype,
        params,
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Checkpoint("truncated preamble".into()))
}

/// Decodes a checkpoint. Values stored in one precision load into either.
pub fn from_bytes<T: Real>(bytes: &[u8]) -> Result<DenoiserModel<T>> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = read_u32(bytes, 8)? as usize;
    let raw = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(raw).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let mut model = DenoiserModel::<T>::new(header.config.clone(), 0)?;
    let mut expected = Vec::new();
    model.visit(&mut |name, p| {
        expected.push(ParamEntry {
            name: name.to_string(),
            shape: p.shape.clone(),
        })
    });
    if expected != header.params {
        return Err(Error::Checkpoint("parameter list does not match the config".into()));
    }
    let w = header.dtype.width();
    let total: usize = expected.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    let data = &bytes[12 + hlen..];
    if data.len() != total * w {
        return Err(Error::Checkpoint(format!(
            "expected {} data bytes, found {}",
            total * w,
            data.len()
        )));
    }
    let mut chunks = data.chunks_exact(w);
    model.visit(&mut |_, p| {
        for v in p.value.iter_mut() {
            let c = chunks.next().expect("length checked");
            let x = match header.dtype {
                Dtype::F32 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
                Dtype::F64 => f64::from_le_bytes(c.try_into().unwrap()),
            };
            *v = T::of(x);
        }
    });
    Ok(model)
}

pub fn save<T: Real>(model: &DenoiserModel<T>, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load<T: Real>(path: &Path) -> Result<DenoiserModel<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Loads a checkpoint and checks that it was trained with `expected`.
pub fn load_expecting<T: Real>(path: &Path, expected: &ModelConfig) -> Result<DenoiserModel<T>> {
    let model = load::<T>(path)?;
    if &model.config != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint config {:?} differs from requested {:?}",
            model.config, expected
        )));
    }
    Ok(model)
}
