//! Binary checkpoint container.
//!
//! ```text
//! magic      8 bytes  "MADEONCK"
//! version    u32 LE   (1)
//! header_len u32 LE
//! header     UTF-8, one "key=value\n" per line: every model config field,
//!            then caller metadata as "meta.<key>=<value>"
//! count      u32 LE   number of tensors
//! per tensor:
//!   name_len u32 LE, name (UTF-8)
//!   ndim     u32 LE, dims (u32 LE each)
//!   data     f32 LE, row-major
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::network::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Parameters, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MADEONCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

/// Serialize `model` (as 32-bit floats) with optional string metadata.
pub fn encode_checkpoint<T: Scalar>(
    model: &Model<T>,
    meta: &BTreeMap<String, String>,
) -> Result<Vec<u8>> {
    let mut header = String::new();
    for (k, v) in model.config().to_pairs() {
        header.push_str(&format!("{k}={v}\n"));
    }
    for (k, v) in meta {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::Format(format!("metadata entry {k:?} cannot be stored")));
        }
        header.push_str(&format!("meta.{k}={v}\n"));
    }

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, to_u32(header.len(), "header length")?);
    out.extend_from_slice(header.as_bytes());

    let tensors = model.named_tensors();
    put_u32(&mut out, to_u32(tensors.len(), "tensor count")?);
    for (name, t) in tensors {
        put_u32(&mut out, to_u32(name.len(), "name length")?);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, to_u32(t.shape().len(), "rank")?);
        for &d in t.shape() {
            put_u32(&mut out, to_u32(d, "dimension")?);
        }
        for &v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
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
            .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?)
            .map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}

/// Inverse of [`encode_checkpoint`].
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model<f32>, BTreeMap<String, String>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = cur.u32()? as usize;
    let header = cur.string(header_len)?;
    let mut pairs = Vec::new();
    let mut meta = BTreeMap::new();
    for line in header.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
        match k.strip_prefix("meta.") {
            Some(key) => {
                meta.insert(key.to_string(), v.to_string());
            }
            None => pairs.push((k, v)),
        }
    }
    let config = ModelConfig::from_pairs(pairs)?;
    // Parameters are overwritten below; the seed only fixes the shapes.
    let mut model = Model::<f32>::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;

    let count = cur.u32()? as usize;
    let mut loaded: HashMap<String, Tensor<f32>> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = cur.string(name_len)?.to_string();
        let ndim = cur.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = cur.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if loaded.insert(name.clone(), Tensor::from_vec(&shape, data)).is_some() {
            return Err(Error::Format(format!("duplicate tensor {name}")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after the last tensor".into()));
    }

    let mut problem = None;
    model.visit_mut("", &mut |name, t| {
        if problem.is_some() {
            return;
        }
        match loaded.remove(&name) {
            Some(src) if src.shape() == t.shape() => *t = src,
            Some(src) => {
                problem = Some(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    t.shape()
                ))
            }
            None => problem = Some(format!("tensor {name} is missing")),
        }
    });
    if let Some(p) = problem {
        return Err(Error::Format(p));
    }
    if let Some(extra) = loaded.keys().next() {
        return Err(Error::Format(format!("unexpected tensor {extra}")));
    }
    Ok((model, meta))
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &Model<T>,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    let bytes = encode_checkpoint(model, meta)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, BTreeMap<String, String>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}
