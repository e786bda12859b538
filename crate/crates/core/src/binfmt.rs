//! Little-endian binary framing shared by the weight and index files:
//! a 4-byte magic, typed fields, and a trailing CRC32 over every preceding byte.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("invalid content: {0}")]
    Invalid(String),
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    /// Length-prefixed (u32) UTF-8 string.
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    /// Appends the CRC32 trailer and returns the finished bytes.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and positions the reader after the version
    /// field. The checksum is verified by [`Reader::finish`] once the caller
    /// has parsed the structure, so a short file reports truncation rather
    /// than a checksum mismatch.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self, FormatError> {
        let mut reader = Reader { bytes, pos: 0 };
        let found_magic = reader.take(4)?;
        if found_magic != magic {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found_magic).into_owned(),
            });
        }
        let found = reader.u32()?;
        if found != version {
            return Err(FormatError::Version {
                expected: version,
                found,
            });
        }
        Ok(reader)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n - remaining,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| FormatError::Invalid(format!("float count {n} overflows")))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|e| FormatError::Invalid(format!("non-UTF-8 string: {e}")))
    }

    /// Reads the CRC32 trailer, which must be the last four bytes, and checks
    /// it against everything before it.
    pub fn finish(mut self) -> Result<(), FormatError> {
        let body_end = self.pos;
        let stored = self.u32()?;
        if self.pos != self.bytes.len() {
            return Err(FormatError::Invalid(format!(
                "{} trailing bytes after checksum",
                self.bytes.len() - self.pos
            )));
        }
        let computed = crc32fast::hash(&self.bytes[..body_end]);
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let mut w = Writer::new(b"TEST", 1);
        w.u32(7);
        w.str("héllo");
        w.f64s(&[1.5, -0.0]);
        w.finish()
    }

    #[test]
    fn round_trip() {
        let bytes = sample();
        let mut r = Reader::open(&bytes, b"TEST", 1).unwrap();
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.str().unwrap(), "héllo");
        let fs = r.f64s(2).unwrap();
        assert_eq!(fs[0], 1.5);
        assert!(fs[1].is_sign_negative());
        r.finish().unwrap();
    }

    fn parse(bytes: &[u8]) -> Result<(), FormatError> {
        let mut r = Reader::open(bytes, b"TEST", 1)?;
        r.u32()?;
        r.str()?;
        r.f64s(2)?;
        r.finish()
    }

    #[test]
    fn detects_corruption() {
        let mut bytes = sample();
        let last = bytes.len() - 6;
        bytes[last] ^= 0xff;
        assert!(matches!(parse(&bytes), Err(FormatError::Checksum { .. })));
        let whole = sample();
        assert!(matches!(
            parse(&whole[..whole.len() - 9]),
            Err(FormatError::Truncated { .. })
        ));
        assert!(matches!(
            Reader::open(&sample(), b"NOPE", 1),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            Reader::open(&sample(), b"TEST", 2),
            Err(FormatError::Version { found: 1, .. })
        ));
    }
}
