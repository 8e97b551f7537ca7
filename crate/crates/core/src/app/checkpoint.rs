//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SIGG" | version u16 | seed u64 | epoch u64 | body_len u64 | header_crc u32
//! body: count u32, then per record
//!       name_len u32 | name (UTF-8) | ndim u32 | dims u64* | data f64*
//! body_crc u32
//! ```
//!
//! The header CRC covers the 30 bytes before it; the body CRC covers the body.

use std::fs;
use std::path::{Path, PathBuf};

use crate::game::Records;
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"SIGG";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 34;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a checkpoint (magic bytes differ)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {supported})")]
    Version { found: u16, supported: u16 },
    #[error("checkpoint truncated: {len} bytes present, {needed} required")]
    Truncated { len: usize, needed: usize },
    #[error("checkpoint CRC mismatch in {section} (stored {stored:#010x}, computed {computed:#010x})")]
    Crc { section: &'static str, stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub epoch: u64,
    pub records: Records,
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend((ckpt.records.len() as u32).to_le_bytes());
    for (name, t) in ckpt.records.items() {
        body.extend((name.len() as u32).to_le_bytes());
        body.extend(name.as_bytes());
        body.extend((t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            body.extend((d as u64).to_le_bytes());
        }
        for &v in t.data() {
            body.extend(v.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + 4);
    out.extend(MAGIC);
    out.extend(FORMAT_VERSION.to_le_bytes());
    out.extend(ckpt.seed.to_le_bytes());
    out.extend(ckpt.epoch.to_le_bytes());
    out.extend((body.len() as u64).to_le_bytes());
    out.extend(crc32fast::hash(&out).to_le_bytes());
    out.extend(&body);
    out.extend(crc32fast::hash(&body).to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| CheckpointError::Malformed(format!("record overruns body at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8 bytes"))
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

/// Validates the whole file before building any state.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() {
        return Err(CheckpointError::Truncated { len: bytes.len(), needed: HEADER_LEN });
    }
    if &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated { len: bytes.len(), needed: HEADER_LEN });
    }
    let stored = le_u32(&bytes[30..34]);
    let computed = crc32fast::hash(&bytes[..30]);
    if stored != computed {
        return Err(CheckpointError::Crc { section: "header", stored, computed });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version { found: version, supported: FORMAT_VERSION });
    }
    let seed = le_u64(&bytes[6..14]);
    let epoch = le_u64(&bytes[14..22]);
    let body_len =
        usize::try_from(le_u64(&bytes[22..30])).map_err(|_| CheckpointError::Malformed("body length".into()))?;
    let needed = HEADER_LEN.saturating_add(body_len).saturating_add(4);
    if bytes.len() < needed {
        return Err(CheckpointError::Truncated { len: bytes.len(), needed });
    }
    if bytes.len() > needed {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - needed)));
    }
    let body = &bytes[HEADER_LEN..HEADER_LEN + body_len];
    let stored = le_u32(&bytes[needed - 4..]);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::Crc { section: "body", stored, computed });
    }

    let mut cur = Cursor { bytes: body, pos: 0 };
    let count = cur.u32()? as usize;
    let mut items = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| CheckpointError::Malformed("record name is not UTF-8".into()))?
            .to_string();
        let ndim = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(
                usize::try_from(cur.u64()?).map_err(|_| CheckpointError::Malformed(format!("{name}: dimension")))?,
            );
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| CheckpointError::Malformed(format!("{name}: shape overflows")))?;
        let raw = cur.take(numel.checked_mul(8).ok_or_else(|| CheckpointError::Malformed(format!("{name}: size")))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(format!("{name}: {e}")))?;
        items.push((name, t));
    }
    if cur.pos != body.len() {
        return Err(CheckpointError::Malformed("unused bytes after the last record".into()));
    }
    Ok(Checkpoint { seed, epoch, records: Records::from_items(items) })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, encode(ckpt)).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    decode(&bytes)
}
