//! `ARMW` weight container.
//!
//! Little-endian layout:
//!
//! ```text
//! "ARMW"  u32 version (=1)  u32 tensor count
//! per tensor:
//!   u16 name length, UTF-8 name
//!   u8 dtype (0 = f32, 1 = f64), u8 rank, rank x u64 extents
//!   raw element data
//! ```
//!
//! Tensors are held as `f64` in memory. An `f32` entry is rounded to `f32`
//! when inserted, so writing it back out is bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{ArmourError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ARMW";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(ArmourError::Format(format!("unknown dtype code {other}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub dtype: DType,
    pub tensor: Tensor,
}

/// Ordered collection of uniquely named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightContainer {
    entries: Vec<StoredTensor>,
}

impl WeightContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: String, tensor: Tensor, dtype: DType) -> Result<()> {
        if name.len() > u16::MAX as usize {
            return Err(ArmourError::Format(format!(
                "name too long: {} bytes",
                name.len()
            )));
        }
        if tensor.rank() > u8::MAX as usize {
            return Err(ArmourError::Format(format!(
                "rank {} too large",
                tensor.rank()
            )));
        }
        if self.get(&name).is_some() {
            return Err(ArmourError::Format(format!(
                "duplicate tensor name `{name}`"
            )));
        }
        let tensor = match dtype {
            DType::F32 => tensor.map(|v| v as f32 as f64),
            DType::F64 => tensor,
        };
        self.entries.push(StoredTensor {
            name,
            dtype,
            tensor,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.tensor)
    }

    pub fn entry(&self, name: &str) -> Option<&StoredTensor> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.tensor))
    }

    pub fn entries(&self) -> &[StoredTensor] {
        &self.entries
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&(e.name.len() as u16).to_le_bytes())?;
            w.write_all(e.name.as_bytes())?;
            w.write_all(&[e.dtype.code(), e.tensor.rank() as u8])?;
            for &extent in e.tensor.shape() {
                w.write_all(&(extent as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(e.tensor.numel() * e.dtype.width());
            for &v in e.tensor.data() {
                match e.dtype {
                    DType::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
                    DType::F64 => buf.extend_from_slice(&v.to_le_bytes()),
                }
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(ArmourError::Format("bad magic, expected ARMW".into()));
        }
        let version = u32::from_le_bytes(cur.array()?);
        if version != VERSION {
            return Err(ArmourError::Format(format!(
                "unsupported version {version}"
            )));
        }
        let count = u32::from_le_bytes(cur.array()?);
        let mut out = Self::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(cur.array()?) as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|e| ArmourError::Format(format!("tensor name is not UTF-8: {e}")))?
                .to_string();
            let [dtype, rank] = cur.array()?;
            let dtype = DType::from_code(dtype)?;
            let mut shape = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                let extent = u64::from_le_bytes(cur.array()?);
                shape.push(usize::try_from(extent).map_err(|_| {
                    ArmourError::Format(format!("extent {extent} does not fit in memory"))
                })?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &n| acc.checked_mul(n))
                .ok_or_else(|| ArmourError::Format(format!("`{name}`: element count overflows")))?;
            let nbytes = numel
                .checked_mul(dtype.width())
                .ok_or_else(|| ArmourError::Format(format!("`{name}`: byte count overflows")))?;
            let raw = cur.take(nbytes)?;
            let data = match dtype {
                DType::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                DType::F64 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            };
            out.insert(name, Tensor::new(shape, data)?, dtype)?;
        }
        if cur.pos != bytes.len() {
            return Err(ArmourError::Format(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - cur.pos
            )));
        }
        Ok(out)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
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
            .ok_or_else(|| ArmourError::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}
