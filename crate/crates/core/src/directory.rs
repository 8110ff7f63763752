//! The published public-key file.
//!
//! Layout, all integers big-endian:
//!
//! ```text
//! "IPKQ" | version u8 = 1 | level u8 (2, 3, 5) | m u16 | h u16
//! m*h public seeds of 32 bytes, row-major
//! records: id_len u16 | id (UTF-8) | pk (pk_len bytes for the level)
//! ```
//!
//! Records are only ever appended. When an identity appears more than once
//! the last record wins, which is how renewals supersede older keys.

use std::collections::HashMap;
use std::path::Path;

use ipkpq_mldsa::Level;

use crate::seed::{validate_id, Dimensions, PubMatrix, SeedError, SeedMatrix, MAX_ID_LEN};

pub const MAGIC: &[u8; 4] = b"IPKQ";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum DirectoryError {
    #[error("bad magic at offset 0")]
    BadMagic,
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("unknown level code {0}")]
    Level(u8),
    #[error("file truncated at offset {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("record at offset {offset}: {reason}")]
    Record { offset: usize, reason: &'static str },
    #[error("identity is {0} bytes, at most 1024 allowed")]
    IdTooLong(usize),
    #[error("invalid identity: {0}")]
    Identity(SeedError),
    #[error("public key is {got} bytes, level requires {expected}")]
    PkLength { expected: usize, got: usize },
    #[error("matrix dimensions unusable: {0}")]
    Dimensions(SeedError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilePkHeader {
    pub level: Level,
    pub dims: Dimensions,
}

impl FilePkHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..4].copy_from_slice(MAGIC);
        h[4] = VERSION;
        h[5] = self.level.code();
        h[6..8].copy_from_slice(&(self.dims.m() as u16).to_be_bytes());
        h[8..10].copy_from_slice(&(self.dims.h() as u16).to_be_bytes());
        h
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DirectoryError> {
        if bytes.len() < HEADER_LEN {
            if !MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
                return Err(DirectoryError::BadMagic);
            }
            return Err(DirectoryError::Truncated {
                offset: bytes.len(),
                needed: HEADER_LEN - bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(DirectoryError::BadMagic);
        }
        if bytes[4] != VERSION {
            return Err(DirectoryError::Version(bytes[4]));
        }
        let level = Level::from_code(bytes[5]).ok_or(DirectoryError::Level(bytes[5]))?;
        let m = u16::from_be_bytes([bytes[6], bytes[7]]) as usize;
        let h = u16::from_be_bytes([bytes[8], bytes[9]]) as usize;
        let dims = Dimensions::relaxed(m, h).map_err(DirectoryError::Dimensions)?;
        Ok(FilePkHeader { level, dims })
    }

    pub fn matrix_len(&self) -> usize {
        self.dims.entries() * 32
    }

    /// Offset of the first record.
    pub fn records_offset(&self) -> usize {
        HEADER_LEN + self.matrix_len()
    }
}

/// One parsed record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PkRecord {
    pub offset: usize,
    pub id: String,
    pub pk: Vec<u8>,
}

impl PkRecord {
    pub fn encoded_len(&self) -> usize {
        2 + self.id.len() + self.pk.len()
    }
}

pub fn encode_record(id: &str, pk: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 + id.len() + pk.len());
    out.extend_from_slice(&(id.len() as u16).to_be_bytes());
    out.extend_from_slice(id.as_bytes());
    out.extend_from_slice(pk);
    out
}

/// An in-memory File_PK: the canonical bytes plus a lookup index.
#[derive(Clone)]
pub struct FilePk {
    header: FilePkHeader,
    bytes: Vec<u8>,
    /// id -> offset of its latest record. Never persisted.
    index: HashMap<String, usize>,
    count: usize,
}

impl std::fmt::Debug for FilePk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FilePk")
            .field("header", &self.header)
            .field("len", &self.bytes.len())
            .field("records", &self.count)
            .finish()
    }
}

impl FilePk {
    /// A new file holding the matrix and no records.
    pub fn create(level: Level, matrix: &PubMatrix) -> Result<Self, DirectoryError> {
        let dims = matrix.dims();
        if dims.m() > u16::MAX as usize || dims.h() > u16::MAX as usize {
            return Err(DirectoryError::Dimensions(SeedError::Dimensions {
                m: dims.m(),
                h: dims.h(),
                reason: "dimension does not fit in u16",
            }));
        }
        let header = FilePkHeader { level, dims };
        let mut bytes = header.encode().to_vec();
        bytes.extend_from_slice(&matrix.to_bytes());
        Ok(FilePk {
            header,
            bytes,
            index: HashMap::new(),
            count: 0,
        })
    }

    pub fn parse(bytes: Vec<u8>) -> Result<Self, DirectoryError> {
        let header = FilePkHeader::decode(&bytes)?;
        let start = header.records_offset();
        if bytes.len() < start {
            return Err(DirectoryError::Truncated {
                offset: bytes.len(),
                needed: start - bytes.len(),
            });
        }
        let mut file = FilePk {
            header,
            bytes,
            index: HashMap::new(),
            count: 0,
        };
        let mut pos = start;
        while pos < file.bytes.len() {
            let (id, next) = file.record_at(pos)?;
            file.index.insert(id, pos);
            file.count += 1;
            pos = next;
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, DirectoryError> {
        Self::parse(std::fs::read(path)?)
    }

    /// Write atomically: a sibling temporary file is renamed into place.
    pub fn write(&self, path: &Path) -> Result<(), DirectoryError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &self.bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Decode the record starting at `pos`; returns its id and the next offset.
    fn record_at(&self, pos: usize) -> Result<(String, usize), DirectoryError> {
        let b = &self.bytes;
        if b.len() - pos < 2 {
            return Err(DirectoryError::Truncated {
                offset: pos,
                needed: 2 - (b.len() - pos),
            });
        }
        let id_len = u16::from_be_bytes([b[pos], b[pos + 1]]) as usize;
        if id_len == 0 || id_len > MAX_ID_LEN {
            return Err(DirectoryError::Record {
                offset: pos,
                reason: "identity length out of range",
            });
        }
        let need = 2 + id_len + self.header.level.pk_len();
        if b.len() - pos < need {
            return Err(DirectoryError::Truncated {
                offset: pos,
                needed: need - (b.len() - pos),
            });
        }
        let id = std::str::from_utf8(&b[pos + 2..pos + 2 + id_len]).map_err(|_| {
            DirectoryError::Record {
                offset: pos + 2,
                reason: "identity is not UTF-8",
            }
        })?;
        Ok((id.to_owned(), pos + need))
    }

    pub fn header(&self) -> FilePkHeader {
        self.header
    }

    pub fn level(&self) -> Level {
        self.header.level
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn record_count(&self) -> usize {
        self.count
    }

    /// Header followed by the matrix; everything before the records.
    pub fn matrix_region(&self) -> &[u8] {
        &self.bytes[..self.header.records_offset()]
    }

    pub fn extract_matrix(&self) -> PubMatrix {
        SeedMatrix::from_bytes(
            self.header.dims,
            &self.bytes[HEADER_LEN..self.header.records_offset()],
        )
        .expect("matrix region sized by header")
    }

    pub fn append_record(&mut self, id: &str, pk: &[u8]) -> Result<(), DirectoryError> {
        if id.len() > MAX_ID_LEN {
            return Err(DirectoryError::IdTooLong(id.len()));
        }
        validate_id(id).map_err(DirectoryError::Identity)?;
        let expected = self.header.level.pk_len();
        if pk.len() != expected {
            return Err(DirectoryError::PkLength {
                expected,
                got: pk.len(),
            });
        }
        let pos = self.bytes.len();
        self.bytes.extend_from_slice(&encode_record(id, pk));
        self.index.insert(id.to_owned(), pos);
        self.count += 1;
        Ok(())
    }

    /// Latest public key recorded for `id`.
    pub fn lookup(&self, id: &str) -> Option<&[u8]> {
        let pos = *self.index.get(id)?;
        let start = pos + 2 + id.len();
        Some(&self.bytes[start..start + self.header.level.pk_len()])
    }

    /// Encoded bytes of the latest record for `id`.
    pub fn record_bytes(&self, id: &str) -> Option<&[u8]> {
        let pos = *self.index.get(id)?;
        Some(&self.bytes[pos..pos + 2 + id.len() + self.header.level.pk_len()])
    }

    /// All records in file order.
    pub fn records(&self) -> Vec<PkRecord> {
        let pk_len = self.header.level.pk_len();
        let mut out = Vec::with_capacity(self.count);
        let mut pos = self.header.records_offset();
        while pos < self.bytes.len() {
            let (id, next) = self.record_at(pos).expect("validated on construction");
            let pk = self.bytes[next - pk_len..next].to_vec();
            out.push(PkRecord { offset: pos, id, pk });
            pos = next;
        }
        out
    }
}
