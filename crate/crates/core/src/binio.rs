//! Compact container for dense `f64` matrices.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"CVRA"
//! version u32 (= 1)
//! count   u32
//! count × { rows u64, cols u64, rows·cols × f64 (row-major) }
//! ```
//!
//! Trailing bytes are rejected.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CVRA";
pub const VERSION: u32 = 1;

pub fn encode(arrays: &[&Array2<f64>]) -> Vec<u8> {
    let payload: usize = arrays.iter().map(|a| 16 + 8 * a.len()).sum();
    let mut out = Vec::with_capacity(12 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        out.extend_from_slice(&(a.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(a.ncols() as u64).to_le_bytes());
        for v in a.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Decode(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Array2<f64>>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Decode("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Decode(format!("unsupported container version {version}")));
    }
    let count = r.u32()? as usize;
    // each array needs at least its 16-byte header
    if count > r.remaining() / 16 {
        return Err(Error::Decode(format!("array count {count} exceeds input size")));
    }
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let rows = r.u64()?;
        let cols = r.u64()?;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .filter(|&b| b <= r.remaining() as u64)
            .ok_or_else(|| Error::Decode(format!("array {k}: shape {rows}x{cols} exceeds input size")))?;
        let data: Vec<f64> = r
            .take(len as usize)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let a = Array2::from_shape_vec((rows as usize, cols as usize), data)
            .map_err(|e| Error::Decode(format!("array {k}: {e}")))?;
        out.push(a);
    }
    if r.remaining() != 0 {
        return Err(Error::Decode(format!("{} trailing bytes", r.remaining())));
    }
    Ok(out)
}

pub fn write_file(path: &Path, arrays: &[&Array2<f64>]) -> Result<()> {
    std::fs::write(path, encode(arrays)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<Array2<f64>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::load(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
