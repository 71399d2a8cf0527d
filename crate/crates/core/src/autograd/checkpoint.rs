//! Binary parameter archive: the magic bytes `SRKT1` followed by records of
//! `u32 name length | UTF-8 name | u32 rank | u32 dims... | f32 data`, all
//! little-endian.

use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"SRKT1";

const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 8;

/// Serialize named tensors. Values are stored as `f32`; non-finite values
/// are rejected.
pub fn encode_checkpoint(records: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    for (name, t) in records {
        if name.len() > MAX_NAME_LEN {
            return Err(Error::Checkpoint(format!("record name too long: {} bytes", name.len())));
        }
        if t.rank() > MAX_RANK {
            return Err(Error::Checkpoint(format!("{name}: rank {} exceeds {MAX_RANK}", t.rank())));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("checkpoint record {name}")));
        }
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::Checkpoint(format!("{name}: dimension {d} too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &x in t.data() {
            let f = x as f32;
            if !f.is_finite() {
                return Err(Error::NonFinite(format!("checkpoint record {name} overflows f32")));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut r = Reader {
        buf: bytes,
        pos: CHECKPOINT_MAGIC.len(),
    };
    let mut out = Vec::new();
    while r.remaining() > 0 {
        let name_len = r.u32("name length")?;
        if name_len > MAX_NAME_LEN {
            return Err(Error::Checkpoint(format!("name length {name_len} too large")));
        }
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")?;
        if rank > MAX_RANK {
            return Err(Error::Checkpoint(format!("{name}: rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel: usize = 1;
        for _ in 0..rank {
            let d = r.u32("dimension")?;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflows")))?;
            shape.push(d);
        }
        let bytes_needed = numel
            .checked_mul(4)
            .filter(|&n| n <= r.remaining())
            .ok_or_else(|| Error::Checkpoint(format!("{name}: truncated data")))?;
        let raw = r.take(bytes_needed, "data")?;
        let mut data = Vec::with_capacity(numel);
        for c in raw.chunks_exact(4) {
            let f = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !f.is_finite() {
                return Err(Error::NonFinite(format!("checkpoint record {name}")));
            }
            data.push(f as f64);
        }
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn write_checkpoint(path: &Path, records: &[(String, Tensor)]) -> Result<()> {
    let bytes = encode_checkpoint(records)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
