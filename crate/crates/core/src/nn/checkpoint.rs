//! Binary checkpoint container:
//!
//! ```text
//! b"SPEDCKPT" | u32 version | u64 header length | JSON header | f64 LE blob
//! ```
//!
//! The header carries the model kind, its config, the training step, free
//! metadata and an index of `(name, shape, offset)` into the blob.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::device;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SPEDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl HostTensor {
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        Ok(Self {
            shape: t.dims().to_vec(),
            data: t.flatten_all()?.to_vec1::<f64>()?,
        })
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Ok(Tensor::from_vec(self.data.clone(), self.shape.as_slice(), &device())?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub step: u64,
    pub meta: serde_json::Value,
    pub params: BTreeMap<String, HostTensor>,
    /// Optimiser moments, empty when not saved.
    pub optimizer: BTreeMap<String, HostTensor>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    step: u64,
    meta: serde_json::Value,
    params: Vec<IndexEntry>,
    optimizer: Vec<IndexEntry>,
}

fn index(map: &BTreeMap<String, HostTensor>, offset: &mut usize, blob: &mut Vec<u8>) -> Vec<IndexEntry> {
    map.iter()
        .map(|(name, t)| {
            let e = IndexEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset: *offset,
            };
            for v in &t.data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            *offset += t.data.len();
            e
        })
        .collect()
}

fn unindex(entries: Vec<IndexEntry>, values: &[f64]) -> Result<BTreeMap<String, HostTensor>> {
    entries
        .into_iter()
        .map(|e| {
            let n: usize = e.shape.iter().product();
            let data = values
                .get(e.offset..e.offset + n)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {} overruns the blob", e.name)))?
                .to_vec();
            Ok((e.name, HostTensor { shape: e.shape, data }))
        })
        .collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blob = Vec::new();
        let mut offset = 0;
        let params = index(&self.params, &mut offset, &mut blob);
        let optimizer = index(&self.optimizer, &mut offset, &mut blob);
        let header = serde_json::to_vec(&Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            step: self.step,
            meta: self.meta.clone(),
            params,
            optimizer,
        })?;
        let mut out = Vec::with_capacity(20 + header.len() + blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_bytes = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(header_bytes)?;
        let blob = &bytes[20 + hlen..];
        if blob.len() % 8 != 0 {
            return Err(bad("blob length is not a multiple of 8"));
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            kind: header.kind,
            config: header.config,
            step: header.step,
            meta: header.meta,
            params: unindex(header.params, &values)?,
            optimizer: unindex(header.optimizer, &values)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }
}
