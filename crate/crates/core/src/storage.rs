//! Self-describing binary container for offline data.
//!
//! Layout, all little-endian:
//! ```text
//! magic   8 bytes  "PRSCLIB\0"
//! version u32
//! count   u64      number of sections
//! section repeated:
//!     name length  u16, then UTF-8 name bytes
//!     payload size u64, then payload bytes
//! digest  32 bytes SHA-256 of everything before it
//! ```
//! Payloads are built from fixed-width primitives: `u64`, IEEE-754 `f64`,
//! index vectors, and column-major dense matrices.

use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PRSCLIB\0";

/// Ordered named byte sections.
#[derive(Default)]
pub struct Container {
    sections: Vec<(String, Vec<u8>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, payload: Vec<u8>) {
        self.sections.push((name.to_string(), payload));
    }

    pub fn get(&self, name: &str) -> Result<&[u8]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_slice())
            .ok_or_else(|| Error::LibraryFormat(format!("missing section '{name}'")))
    }

    pub fn section_names(&self) -> Vec<&str> {
        self.sections.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Serializes, appends the digest, and writes atomically enough for a
    /// single writer.
    pub fn write(&self, path: &Path, version: u32) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&version.to_le_bytes());
        buf.extend_from_slice(&(self.sections.len() as u64).to_le_bytes());
        for (name, payload) in &self.sections {
            let nb = name.as_bytes();
            buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
            buf.extend_from_slice(nb);
            buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            buf.extend_from_slice(payload);
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Reads and verifies magic, version, and digest.
    pub fn read(path: &Path, expected_version: u32) -> Result<Container> {
        let buf = std::fs::read(path)?;
        if buf.len() < MAGIC.len() + 4 + 8 + 32 {
            return Err(Error::LibraryFormat("file too short".into()));
        }
        let (body, stored) = buf.split_at(buf.len() - 32);
        if &body[..8] != MAGIC {
            return Err(Error::LibraryFormat("bad magic".into()));
        }
        let computed = Sha256::digest(body);
        if computed.as_slice() != stored {
            return Err(Error::ChecksumMismatch {
                stored: hex(stored),
                computed: hex(&computed),
            });
        }
        let mut r = Reader::new(&body[8..]);
        let found = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if found != expected_version {
            return Err(Error::VersionMismatch {
                found,
                expected: expected_version,
            });
        }
        let count = r.u64()?;
        let mut sections = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let nlen = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::LibraryFormat("section name is not UTF-8".into()))?
                .to_string();
            let plen = r.u64()? as usize;
            sections.push((name, r.take(plen)?.to_vec()));
        }
        if !r.is_empty() {
            return Err(Error::LibraryFormat("trailing bytes after sections".into()));
        }
        Ok(Container { sections })
    }
}

/// Hex SHA-256 of a whole file, for provenance reporting.
pub fn file_checksum(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path)?)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// --- payload primitives ---

pub fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_index_vec(buf: &mut Vec<u8>, v: &[usize]) {
    put_u64(buf, v.len() as u64);
    for &x in v {
        put_u64(buf, x as u64);
    }
}

pub fn put_f64_vec(buf: &mut Vec<u8>, v: &[f64]) {
    put_u64(buf, v.len() as u64);
    for &x in v {
        put_f64(buf, x);
    }
}

/// Column-major, prefixed by the shape.
pub fn put_matrix(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    put_u64(buf, m.nrows() as u64);
    put_u64(buf, m.ncols() as u64);
    for &x in m.as_slice() {
        put_f64(buf, x);
    }
}

/// Sequential payload reader with bounds checking.
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::LibraryFormat("payload truncated".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn index_vec(&mut self) -> Result<Vec<usize>> {
        let n = self.u64()? as usize;
        (0..n).map(|_| Ok(self.u64()? as usize)).collect()
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let total = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::LibraryFormat("matrix shape overflow".into()))?;
        let mut m = DMatrix::zeros(rows, cols);
        let bytes = self.take(8 * total)?;
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            m.as_mut_slice()[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(m)
    }
}
