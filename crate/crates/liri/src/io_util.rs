//! Shared binary-format helpers: length-prefixed primitives over little-endian
//! byte buffers, and atomic file writes (write to a temp file in the target
//! directory, then rename).

use std::io::Cursor;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Serialize via `fill`, then atomically replace `path` with the result.
pub fn atomic_write(path: &Path, fill: impl FnOnce(&mut Vec<u8>)) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    std::fs::write(tmp.path(), &buf).map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_string(buf: &mut Vec<u8>, s: &str) {
    buf.write_u32::<LittleEndian>(s.len() as u32).unwrap();
    buf.extend_from_slice(s.as_bytes());
}

pub fn write_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.write_f32::<LittleEndian>(*v).unwrap();
    }
}

/// Cursor over a loaded file with truncation-aware reads.
pub struct FileReader {
    cursor: Cursor<Vec<u8>>,
    path: PathBuf,
}

impl FileReader {
    pub fn open(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(FileReader {
            cursor: Cursor::new(bytes),
            path: path.to_path_buf(),
        })
    }

    fn truncated(&self) -> Error {
        Error::Truncated(self.path.clone())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Read and verify a magic string; mismatch reports the expected tag.
    pub fn expect_magic(&mut self, magic: &'static str) -> Result<()> {
        let mut got = vec![0u8; magic.len()];
        std::io::Read::read_exact(&mut self.cursor, &mut got)
            .map_err(|_| self.truncated())?;
        if got != magic.as_bytes() {
            return Err(Error::BadMagic {
                path: self.path.clone(),
                expected: magic,
            });
        }
        Ok(())
    }

    pub fn read_u8(&mut self) -> Result<u8> {
        self.cursor.read_u8().map_err(|_| self.truncated())
    }

    pub fn read_u32(&mut self) -> Result<u32> {
        self.cursor
            .read_u32::<LittleEndian>()
            .map_err(|_| self.truncated())
    }

    pub fn read_u64(&mut self) -> Result<u64> {
        self.cursor
            .read_u64::<LittleEndian>()
            .map_err(|_| self.truncated())
    }

    pub fn read_f32(&mut self) -> Result<f32> {
        self.cursor
            .read_f32::<LittleEndian>()
            .map_err(|_| self.truncated())
    }

    pub fn read_f64(&mut self) -> Result<f64> {
        self.cursor
            .read_f64::<LittleEndian>()
            .map_err(|_| self.truncated())
    }

    pub fn read_f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.read_f32()?);
        }
        Ok(out)
    }

    pub fn read_string(&mut self) -> Result<String> {
        let len = self.read_u32()? as usize;
        let mut bytes = vec![0u8; len];
        std::io::Read::read_exact(&mut self.cursor, &mut bytes)
            .map_err(|_| self.truncated())?;
        String::from_utf8(bytes).map_err(|_| Error::Malformed {
            path: self.path.clone(),
            line: 0,
            msg: "invalid utf-8 in string field".into(),
        })
    }
}
