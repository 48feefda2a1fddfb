//! Little-endian binary readers and writers shared by the `OJFW`, `OJFC`,
//! and `OJFS` file formats. Every read failure reports the byte offset.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::Result;

pub struct BinWriter {
    inner: BufWriter<File>,
    path: String,
}

impl BinWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(BinWriter {
            inner: BufWriter::new(file),
            path: path.display().to_string(),
        })
    }

    fn write_all(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner
            .write_all(bytes)
            .map_err(|e| Error::io(self.path.clone(), e))
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        self.write_all(magic)
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.write_all(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.write_all(&v.to_le_bytes())
    }

    /// Write an `f64` slice as little-endian `f32`s.
    pub fn f32_slice(&mut self, values: &[f64]) -> Result<()> {
        for &v in values {
            self.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner
            .flush()
            .map_err(|e| Error::io(self.path.clone(), e))
    }
}

pub struct BinReader {
    inner: BufReader<File>,
    path: String,
    offset: u64,
}

impl BinReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(BinReader {
            inner: BufReader::new(file),
            path: path.display().to_string(),
            offset: 0,
        })
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn fail(&self, message: impl Into<String>) -> Error {
        Error::format(self.path.clone(), self.offset, message)
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            Error::format(
                self.path.clone(),
                self.offset,
                format!("truncated while reading {what}: {e}"),
            )
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    /// Read and verify a 4-byte magic tag.
    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf, "magic")?;
        if &buf != expected {
            return Err(Error::format(
                self.path.clone(),
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&buf),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf, what)?;
        Ok(u32::from_le_bytes(buf))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.read_exact(&mut buf, what)?;
        Ok(u64::from_le_bytes(buf))
    }

    /// Read `n` little-endian `f32`s, widening to `f64` and rejecting
    /// non-finite values.
    pub fn f32_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 4];
        self.read_exact(&mut bytes, what)?;
        let mut out = Vec::with_capacity(n);
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::format(
                    self.path.clone(),
                    self.offset - (n - i) as u64 * 4,
                    format!("non-finite value in {what}"),
                ));
            }
            out.push(v as f64);
        }
        Ok(out)
    }

    /// Require end-of-file.
    pub fn expect_eof(&mut self) -> Result<()> {
        let mut buf = [0u8; 1];
        match self.inner.read(&mut buf) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.fail("trailing bytes after end of data")),
            Err(e) => Err(Error::io(self.path.clone(), e)),
        }
    }
}

/// FNV-1a 64-bit hash, used for artifact content hashes in run manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hex-encoded FNV-1a hash of a file's contents.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(format!("{:016x}", fnv1a64(&bytes)))
}
