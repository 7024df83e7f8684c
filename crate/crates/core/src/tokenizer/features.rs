//! Binary feature dump.
//!
//! ```text
//! magic   8 bytes "MADEONFT"
//! version u32 LE  (1)
//! records until end of file:
//!   id_len u32 LE, id (UTF-8)
//!   frames u32 LE (T), dim u32 LE (D)
//!   data   T·D f32 LE, row-major (frame by frame)
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"MADEONFT";
pub const FEATURE_VERSION: u32 = 1;

/// Frames of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureRecord {
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

pub fn write_features(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    for r in records {
        if r.data.len() != r.frames * r.dim {
            return Err(Error::Format(format!("record {} has inconsistent size", r.id)));
        }
        let fit = |v: usize| u32::try_from(v).map_err(|_| Error::Format("feature size exceeds u32".into()));
        w.write_all(&fit(r.id.len())?.to_le_bytes())?;
        w.write_all(r.id.as_bytes())?;
        w.write_all(&fit(r.frames)?.to_le_bytes())?;
        w.write_all(&fit(r.dim)?.to_le_bytes())?;
        for v in &r.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    let mut bytes = Vec::new();
    BufReader::new(std::fs::File::open(path)?).read_to_end(&mut bytes)?;
    let fail = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: msg.to_string(),
    };
    if bytes.len() < 12 || &bytes[..8] != FEATURE_MAGIC {
        return Err(fail("not a feature dump (bad magic)"));
    }
    let mut cur = &bytes[8..];
    let version = read_u32(&mut cur).map_err(|_| fail("truncated header"))?;
    if version != FEATURE_VERSION {
        return Err(fail(&format!("unsupported feature dump version {version}")));
    }
    let mut out = Vec::new();
    while !cur.is_empty() {
        let truncated = |_| fail(&format!("record {} is truncated", out.len()));
        let id_len = read_u32(&mut cur).map_err(truncated)? as usize;
        if cur.len() < id_len {
            return Err(fail(&format!("record {} is truncated", out.len())));
        }
        let (id, rest) = cur.split_at(id_len);
        let id = std::str::from_utf8(id)
            .map_err(|_| fail(&format!("record {} id is not UTF-8", out.len())))?
            .to_string();
        cur = rest;
        let frames = read_u32(&mut cur).map_err(truncated)? as usize;
        let dim = read_u32(&mut cur).map_err(truncated)? as usize;
        let n = frames
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| fail("record size overflows"))?;
        if cur.len() < n {
            return Err(fail(&format!("record {id} is truncated")));
        }
        let (raw, rest) = cur.split_at(n);
        cur = rest;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push(FeatureRecord {
            id,
            frames,
            dim,
            data,
        });
    }
    Ok(out)
}
