//! The GLEE binary container.
//!
//! Every file starts with the magic `GLEE`, a little-endian `u16` version and
//! a `u8` kind. Feature files (kind 0) then carry `n: u64, d: u32, C: u32`,
//! `n` class ids as `u32` and `n·d` `f64` values. Parameter files (kinds 1–3)
//! carry a `u32` block count, then per block `name_len: u16, name (UTF-8),
//! rows: u32, cols: u32` and `rows·cols` `f64` values, and end with a `u64`
//! FNV-1a checksum of every preceding byte.

use std::fs;
use std::path::Path;

use crate::autodiff::Matrix;
use crate::error::{GleeError, Result};

pub const MAGIC: &[u8; 4] = b"GLEE";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FileKind {
    Features = 0,
    Backbone = 1,
    Head = 2,
    Checkpoint = 3,
}

impl FileKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(FileKind::Features),
            1 => Some(FileKind::Backbone),
            2 => Some(FileKind::Head),
            3 => Some(FileKind::Checkpoint),
            _ => None,
        }
    }
}

/// A named matrix inside a parameter file.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub value: Matrix,
}

impl Block {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        Block {
            name: name.into(),
            value,
        }
    }

    pub fn vector(name: impl Into<String>, v: &[f64]) -> Self {
        Block::new(name, Matrix::row_vector(v))
    }

    pub fn scalar(name: impl Into<String>, v: f64) -> Self {
        Block::new(name, Matrix::row_vector(&[v]))
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn header(kind: FileKind) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind as u8);
    out
}

pub fn encode_blocks(kind: FileKind, blocks: &[Block]) -> Result<Vec<u8>> {
    let mut out = header(kind);
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for b in blocks {
        let name = b.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| GleeError::format(out.len() as u64, format!("block name {:?} too long", b.name)))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(b.value.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(b.value.cols() as u32).to_le_bytes());
        for v in b.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

pub fn write_blocks(path: &Path, kind: FileKind, blocks: &[Block]) -> Result<()> {
    let bytes = encode_blocks(kind, blocks)?;
    fs::write(path, bytes).map_err(|e| GleeError::io(path, e))
}

/// Bounds-checked little-endian reader that reports byte offsets.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(GleeError::format(
                self.offset(),
                format!("truncated {what}: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes_needed = count
            .checked_mul(8)
            .ok_or_else(|| GleeError::format(self.offset(), format!("{what} length overflows")))?;
        let raw = self.take(bytes_needed, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Magic, version and kind.
    pub fn header(&mut self) -> Result<FileKind> {
        let magic = self.take(4, "magic")?;
        if magic != MAGIC {
            return Err(GleeError::format(0, format!("bad magic {magic:?}")));
        }
        let at = self.offset();
        let version = self.u16("version")?;
        if version != VERSION {
            return Err(GleeError::format(
                at,
                format!("unsupported version {version} (expected {VERSION})"),
            ));
        }
        let at = self.offset();
        let kind = self.u8("kind")?;
        FileKind::from_u8(kind).ok_or_else(|| GleeError::format(at, format!("unknown file kind {kind}")))
    }
}

pub fn decode_blocks(bytes: &[u8]) -> Result<(FileKind, Vec<Block>)> {
    let mut r = Reader::new(bytes);
    let kind = r.header()?;
    if kind == FileKind::Features {
        return Err(GleeError::format(6, "feature file where a parameter file was expected"));
    }
    let count = r.u32("block count")?;
    let mut blocks = Vec::with_capacity(count.min(1024) as usize);
    for _ in 0..count {
        let name_len = r.u16("block name length")? as usize;
        let at = r.offset();
        let name = std::str::from_utf8(r.take(name_len, "block name")?)
            .map_err(|_| GleeError::format(at, "block name is not UTF-8"))?
            .to_string();
        let rows = r.u32("block rows")? as usize;
        let cols = r.u32("block cols")? as usize;
        let data = r.f64s(rows * cols, "block payload")?;
        blocks.push(Block::new(name, Matrix::from_vec(rows, cols, data)?));
    }
    let body_end = r.offset();
    let stored = r.u64("checksum")?;
    if r.remaining() != 0 {
        return Err(GleeError::format(
            r.offset(),
            format!("{} unexpected trailing bytes", r.remaining()),
        ));
    }
    if fnv1a(&bytes[..body_end as usize]) != stored {
        return Err(GleeError::format(body_end, "checksum mismatch"));
    }
    Ok((kind, blocks))
}

pub fn read_blocks(path: &Path) -> Result<(FileKind, Vec<Block>)> {
    let bytes = fs::read(path).map_err(|e| GleeError::io(path, e))?;
    decode_blocks(&bytes)
}

/// Named lookup over decoded blocks.
pub(crate) struct BlockMap {
    blocks: Vec<Block>,
}

impl BlockMap {
    pub fn new(blocks: Vec<Block>) -> Self {
        BlockMap { blocks }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.blocks.iter().find(|b| b.name == name).map(|b| &b.value)
    }

    pub fn require(&self, name: &str) -> Result<&Matrix> {
        self.get(name)
            .ok_or_else(|| GleeError::format(0, format!("missing block {name:?}")))
    }

    pub fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let m = self.require(name)?;
        if m.shape() != (rows, cols) {
            return Err(GleeError::Shape(format!(
                "block {name:?} is {:?}, expected {:?}",
                m.shape(),
                (rows, cols)
            )));
        }
        Ok(m.clone())
    }

    pub fn vector(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        Ok(self.matrix(name, 1, len)?.into_vec())
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        Ok(self.matrix(name, 1, 1)?.data()[0])
    }

    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Block> + 'a {
        self.blocks.iter().filter(move |b| b.name.starts_with(prefix))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Block> {
        vec![
            Block::new("w", Matrix::from_rows(&[vec![1.0, -2.5], vec![f64::MIN_POSITIVE, 3.0]]).unwrap()),
            Block::scalar("meta.epoch", 4.0),
        ]
    }

    #[test]
    fn round_trip() {
        let bytes = encode_blocks(FileKind::Head, &sample()).unwrap();
        assert_eq!(&bytes[..4], b"GLEE");
        let (kind, blocks) = decode_blocks(&bytes).unwrap();
        assert_eq!(kind, FileKind::Head);
        assert_eq!(blocks, sample());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_blocks(FileKind::Head, &sample()).unwrap();
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_blocks(&extra), Err(GleeError::Format { .. })));
        let mut flipped = bytes.clone();
        let last = flipped.len() - 9;
        flipped[last] ^= 0x40;
        assert!(matches!(decode_blocks(&flipped), Err(GleeError::Format { .. })));
        assert!(decode_blocks(&bytes[..bytes.len() - 3]).is_err());
        let mut version = bytes.clone();
        version[4] = 9;
        match decode_blocks(&version) {
            Err(GleeError::Format { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
