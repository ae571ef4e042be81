//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "RVSNCKPT"
//! version    u32
//! arch       u16 length + UTF-8 tag
//! blocks     u32 count, then per block:
//!   name     u16 length + UTF-8
//!   rank     u32, dims u64 x rank
//!   data     f64 x product(dims), row-major
//!   checksum 32 bytes, SHA-256 of the data bytes
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RVSNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: String,
    pub blocks: Vec<(String, Tensor)>,
}

pub fn encode_checkpoint(arch: &str, blocks: &[(&str, &Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut out, arch);
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, tensor) in blocks {
        put_str(&mut out, name);
        out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        let start = out.len();
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out[start..]);
        out.extend_from_slice(&digest);
    }
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("non UTF-8 string".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let arch = r.string()?;
    let count = r.u32()?;
    let mut blocks = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint(format!("block `{name}` too large")))?;
        let raw = r.take(n)?;
        let stored = r.take(32)?;
        if Sha256::digest(raw).as_slice() != stored {
            return Err(Error::Checkpoint(format!(
                "checksum mismatch in block `{name}`"
            )));
        }
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|e| Error::Checkpoint(format!("block `{name}`: {e}")))?;
        blocks.push((name, tensor));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last block".into()));
    }
    Ok(Checkpoint { arch, blocks })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    arch: &str,
    blocks: &[(&str, &Tensor)],
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(arch, blocks)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
