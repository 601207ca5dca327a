//! Little-endian section encoding shared by the persisted file formats.
//!
//! A file is `magic (4 bytes) | sections… | crc32 (u32)` where each section is
//! `tag (4 bytes) | length (u64) | payload` and the checksum covers every
//! preceding byte.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: String, found: String },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("truncated input while reading {0}")]
    Truncated(&'static str),
    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error("missing section {0}")]
    MissingSection(String),
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
}

#[derive(Debug, Default, Clone)]
pub struct BinWriter {
    buf: Vec<u8>,
}

impl BinWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    /// Length-prefixed UTF-8.
    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }

    pub fn f64_slice(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn section(&mut self, tag: &[u8; 4], payload: &[u8]) {
        self.bytes(tag);
        self.u64(payload.len() as u64);
        self.bytes(payload);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    /// Appends the CRC32 of everything written so far and returns the bytes.
    pub fn finish_with_crc(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct BinReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BinReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// A `u64` that must fit in memory-addressable sizes.
    pub fn len_prefix(&mut self, what: &'static str) -> Result<usize, FormatError> {
        let n = self.u64(what)?;
        let n = usize::try_from(n).map_err(|_| FormatError::Malformed {
            what,
            detail: format!("length {n} too large"),
        })?;
        Ok(n)
    }

    pub fn f64(&mut self, what: &'static str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        self.take(n, what)
    }

    pub fn str(&mut self, what: &'static str) -> Result<String, FormatError> {
        let n = self.len_prefix(what)?;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|e| FormatError::Malformed {
            what,
            detail: e.to_string(),
        })
    }

    pub fn f64_vec(&mut self, what: &'static str) -> Result<Vec<f64>, FormatError> {
        let n = self.len_prefix(what)?;
        if self.remaining() / 8 < n {
            return Err(FormatError::Truncated(what));
        }
        (0..n).map(|_| self.f64(what)).collect()
    }

    /// Reads one `tag | len | payload` section.
    pub fn section(&mut self) -> Result<([u8; 4], &'a [u8]), FormatError> {
        let tag: [u8; 4] = self.take(4, "section tag")?.try_into().unwrap();
        let n = self.len_prefix("section length")?;
        let payload = self.take(n, "section payload")?;
        Ok((tag, payload))
    }
}

/// Reads sections until the input is exhausted; duplicate tags are rejected.
pub fn read_sections<'a>(r: &mut BinReader<'a>) -> Result<BTreeMap<[u8; 4], &'a [u8]>, FormatError> {
    let mut out = BTreeMap::new();
    while !r.is_done() {
        let (tag, payload) = r.section()?;
        if out.insert(tag, payload).is_some() {
            return Err(FormatError::Malformed {
                what: "section table",
                detail: format!("duplicate section {}", String::from_utf8_lossy(&tag)),
            });
        }
    }
    Ok(out)
}

/// Payload of a required section.
pub fn require<'a>(sections: &BTreeMap<[u8; 4], &'a [u8]>, tag: &[u8; 4]) -> Result<&'a [u8], FormatError> {
    sections
        .get(tag)
        .copied()
        .ok_or_else(|| FormatError::MissingSection(String::from_utf8_lossy(tag).into_owned()))
}

/// Verifies magic and trailing CRC, returning the body between them.
pub fn open_checked<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<&'a [u8], FormatError> {
    if bytes.len() < 8 {
        return Err(FormatError::Truncated("file header"));
    }
    if &bytes[..4] != magic {
        return Err(FormatError::Magic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    Ok(&body[4..])
}
