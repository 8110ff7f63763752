//! Deterministic tag-length-value encoding.
//!
//! Every element is `tag u8 | length u32 BE | value`. Fields appear in a
//! fixed order and are never optional at the TLV level, so a value has
//! exactly one encoding.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TlvError {
    #[error("truncated element at offset {offset}")]
    Truncated { offset: usize },
    #[error("offset {offset}: expected tag 0x{expected:02x}, found 0x{found:02x}")]
    Tag {
        offset: usize,
        expected: u8,
        found: u8,
    },
    #[error("offset {offset}: invalid {what}")]
    Value { offset: usize, what: &'static str },
    #[error("trailing bytes at offset {offset}")]
    Trailing { offset: usize },
}

pub const HEADER: usize = 5;

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn bytes(&mut self, tag: u8, value: &[u8]) -> &mut Self {
        self.buf.push(tag);
        self.buf.extend_from_slice(&(value.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(value);
        self
    }

    pub fn u8(&mut self, tag: u8, v: u8) -> &mut Self {
        self.bytes(tag, &[v])
    }

    pub fn u32(&mut self, tag: u8, v: u32) -> &mut Self {
        self.bytes(tag, &v.to_be_bytes())
    }

    pub fn u64(&mut self, tag: u8, v: u64) -> &mut Self {
        self.bytes(tag, &v.to_be_bytes())
    }

    pub fn i64(&mut self, tag: u8, v: i64) -> &mut Self {
        self.bytes(tag, &v.to_be_bytes())
    }

    pub fn str(&mut self, tag: u8, v: &str) -> &mut Self {
        self.bytes(tag, v.as_bytes())
    }

    pub fn nested(&mut self, tag: u8, f: impl FnOnce(&mut Writer)) -> &mut Self {
        let mut inner = Writer::new();
        f(&mut inner);
        self.bytes(tag, &inner.buf)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Reads elements in order. Offsets in errors are absolute within the
/// outermost buffer.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader {
            buf,
            pos: 0,
            base: 0,
        }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn peek_tag(&self) -> Option<u8> {
        self.buf.get(self.pos).copied()
    }

    /// The value of the next element, which must carry `tag`.
    pub fn bytes(&mut self, tag: u8) -> Result<&'a [u8], TlvError> {
        let start = self.offset();
        let rest = &self.buf[self.pos..];
        if rest.len() < HEADER {
            return Err(TlvError::Truncated { offset: start });
        }
        if rest[0] != tag {
            return Err(TlvError::Tag {
                offset: start,
                expected: tag,
                found: rest[0],
            });
        }
        let len = u32::from_be_bytes(rest[1..5].try_into().expect("sized")) as usize;
        if rest.len() - HEADER < len {
            return Err(TlvError::Truncated { offset: start });
        }
        self.pos += HEADER + len;
        Ok(&rest[HEADER..HEADER + len])
    }

    pub fn nested(&mut self, tag: u8) -> Result<Reader<'a>, TlvError> {
        let base = self.offset() + HEADER;
        let buf = self.bytes(tag)?;
        Ok(Reader { buf, pos: 0, base })
    }

    pub fn fixed<const N: usize>(&mut self, tag: u8, what: &'static str) -> Result<[u8; N], TlvError> {
        let offset = self.offset();
        self.bytes(tag)?
            .try_into()
            .map_err(|_| TlvError::Value { offset, what })
    }

    pub fn u8(&mut self, tag: u8) -> Result<u8, TlvError> {
        Ok(self.fixed::<1>(tag, "u8")?[0])
    }

    pub fn u32(&mut self, tag: u8) -> Result<u32, TlvError> {
        Ok(u32::from_be_bytes(self.fixed(tag, "u32")?))
    }

    pub fn u64(&mut self, tag: u8) -> Result<u64, TlvError> {
        Ok(u64::from_be_bytes(self.fixed(tag, "u64")?))
    }

    pub fn i64(&mut self, tag: u8) -> Result<i64, TlvError> {
        Ok(i64::from_be_bytes(self.fixed(tag, "i64")?))
    }

    pub fn str(&mut self, tag: u8) -> Result<&'a str, TlvError> {
        let offset = self.offset();
        std::str::from_utf8(self.bytes(tag)?).map_err(|_| TlvError::Value {
            offset,
            what: "UTF-8 string",
        })
    }

    pub fn invalid(&self, what: &'static str) -> TlvError {
        TlvError::Value {
            offset: self.offset(),
            what,
        }
    }

    pub fn finish(&self) -> Result<(), TlvError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(TlvError::Trailing {
                offset: self.offset(),
            })
        }
    }
}
