//! Big-endian byte cursor shared by the binary formats.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at byte {offset}")]
    Truncated { offset: usize },
    #[error("invalid {what} at byte {offset}")]
    Invalid { offset: usize, what: String },
}

pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated { offset: self.buf.len() });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A `u16` length followed by that many UTF-8 bytes.
    pub fn short_str(&mut self) -> Result<String, DecodeError> {
        let len = self.u16()? as usize;
        let at = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.invalid_at(at, "utf-8 string"))
    }

    pub fn invalid(&self, what: &str) -> DecodeError {
        self.invalid_at(self.pos, what)
    }

    fn invalid_at(&self, offset: usize, what: &str) -> DecodeError {
        DecodeError::Invalid {
            offset,
            what: what.to_string(),
        }
    }
}

pub fn put_short_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_big_endian() {
        let mut r = ByteReader::new(&[0, 1, 0, 0, 0, 2, 7]);
        assert_eq!(r.u16().unwrap(), 1);
        assert_eq!(r.u32().unwrap(), 2);
        assert_eq!(r.u8().unwrap(), 7);
        assert!(matches!(r.u8(), Err(DecodeError::Truncated { .. })));
    }

    #[test]
    fn short_strings() {
        let mut out = Vec::new();
        put_short_str(&mut out, "name");
        assert_eq!(ByteReader::new(&out).short_str().unwrap(), "name");
        assert!(ByteReader::new(&out[..3]).short_str().is_err());
    }
}
