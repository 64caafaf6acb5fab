//! Versioned little-endian parameter checkpoints.
//!
//! Layout:
//!
//! ```text
//! magic  "CGMC"
//! u32    version (1)
//! u32    metadata length, then that many bytes of UTF-8 JSON
//! u64    training step
//! u32    tensor count
//! per tensor:
//!   u32 name length, name bytes (UTF-8)
//!   u8  element type (0 = f32, 1 = f64)
//!   u32 rank, then rank × u64 dims
//!   data, little-endian, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::{Adam, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CGMC";
pub const VERSION: u32 = 1;

/// Stored tensor payload; optimizer moments keep double precision so a
/// resumed run continues bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl StoredTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            StoredTensor::F32(t) => &t.shape,
            StoredTensor::F64(t) => &t.shape,
        }
    }
}

/// In-memory checkpoint: free-form JSON metadata, a step counter and named
/// tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub step: u64,
    pub tensors: Vec<(String, StoredTensor)>,
}

fn corrupt(path: &Path, cause: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        cause: cause.into(),
    }
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value, step: u64) -> Self {
        Self {
            meta,
            step,
            tensors: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Adds every parameter of `store` as `prefix + name`.
    pub fn push_params(&mut self, prefix: &str, store: &ParamStore<f32>) {
        for (name, t) in store.named() {
            self.tensors.push((format!("{prefix}{name}"), StoredTensor::F32(t.clone())));
        }
    }

    /// Overwrites every parameter of `store` from `prefix + name`.
    pub fn load_params(&self, prefix: &str, store: &mut ParamStore<f32>) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let key = format!("{prefix}{}", store.name(id));
            match self.get(&key) {
                Some(StoredTensor::F32(t)) if t.shape == store.value(id).shape => {
                    *store.value_mut(id) = t.clone();
                }
                Some(other) => {
                    return Err(Error::Graph(format!(
                        "checkpoint tensor {key} has shape {:?}, expected {:?} (f32)",
                        other.shape(),
                        store.value(id).shape
                    )))
                }
                None => return Err(Error::Graph(format!("checkpoint lacks tensor {key}"))),
            }
        }
        Ok(())
    }

    /// Adds Adam moments as `prefix + "adam.m/" + name` and `... "adam.v/" ...`,
    /// plus a one-element step counter.
    pub fn push_adam<T: Scalar>(&mut self, prefix: &str, adam: &Adam, store: &ParamStore<T>) {
        let (m, v) = adam.moments();
        for (kind, buf) in [("m", m), ("v", v)] {
            for (id, data) in store.ids().zip(buf) {
                let shape = store.value(id).shape.clone();
                self.tensors.push((
                    format!("{prefix}adam.{kind}/{}", store.name(id)),
                    StoredTensor::F64(Tensor::new(shape, data.clone())),
                ));
            }
        }
        self.tensors.push((
            format!("{prefix}adam.step"),
            StoredTensor::F64(Tensor::new(vec![1], vec![adam.step_count() as f64])),
        ));
    }

    pub fn load_adam<T: Scalar>(&self, prefix: &str, adam: &mut Adam, store: &ParamStore<T>) -> Result<()> {
        let fetch = |kind: &str| -> Result<Vec<Vec<f64>>> {
            store
                .ids()
                .map(|id| {
                    let key = format!("{prefix}adam.{kind}/{}", store.name(id));
                    match self.get(&key) {
                        Some(StoredTensor::F64(t)) => Ok(t.data.clone()),
                        _ => Err(Error::Graph(format!("checkpoint lacks optimizer tensor {key}"))),
                    }
                })
                .collect()
        };
        let step = match self.get(&format!("{prefix}adam.step")) {
            Some(StoredTensor::F64(t)) if t.len() == 1 => t.data[0] as u64,
            _ => return Err(Error::Graph(format!("checkpoint lacks {prefix}adam.step"))),
        };
        adam.restore(step, fetch("m")?, fetch("v")?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("JSON values always serialize");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let (tag, shape) = match t {
                StoredTensor::F32(t) => (0u8, &t.shape),
                StoredTensor::F64(t) => (1u8, &t.shape),
            };
            out.push(tag);
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match t {
                StoredTensor::F32(t) => t.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                StoredTensor::F64(t) => t.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = bytes;
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            if r.len() < n {
                return Err(corrupt(path, format!("truncated while reading {what}")));
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        if take(4, "magic")? != MAGIC {
            return Err(corrupt(path, "not a checkpoint (bad magic)"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let version = u32_at(take(4, "version")?);
        if version != VERSION {
            return Err(corrupt(path, format!("unsupported version {version}")));
        }
        let meta_len = u32_at(take(4, "metadata length")?) as usize;
        let meta = serde_json::from_slice(take(meta_len, "metadata")?)
            .map_err(|e| corrupt(path, format!("metadata: {e}")))?;
        let step = u64_at(take(8, "step")?);
        let count = u32_at(take(4, "tensor count")?) as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = u32_at(take(4, "name length")?) as usize;
            let name = std::str::from_utf8(take(name_len, "name")?)
                .map_err(|_| corrupt(path, "tensor name is not UTF-8"))?
                .to_owned();
            let tag = take(1, "element type")?[0];
            let rank = u32_at(take(4, "rank")?) as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(u64_at(take(8, "dimension")?) as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| corrupt(path, format!("{name}: shape overflows")))?;
            let t = match tag {
                0 => {
                    let raw = take(n.checked_mul(4).ok_or_else(|| corrupt(path, "size overflow"))?, &name)?;
                    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect();
                    StoredTensor::F32(Tensor::new(shape, data))
                }
                1 => {
                    let raw = take(n.checked_mul(8).ok_or_else(|| corrupt(path, "size overflow"))?, &name)?;
                    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect();
                    StoredTensor::F64(Tensor::new(shape, data))
                }
                other => return Err(corrupt(path, format!("{name}: unknown element type {other}"))),
            };
            tensors.push((name, t));
        }
        if !r.is_empty() {
            return Err(corrupt(path, format!("{} trailing bytes", r.len())));
        }
        Ok(Self { meta, step, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        f.sync_all().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
