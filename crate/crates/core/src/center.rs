//! The key center: sealed private material, registration records and the
//! published public-key file.
//!
//! The private seed matrix, the center's own seeds and every per-CA
//! registration secret live in a [`SealedStore`]. Nothing in it is ever
//! written out in the clear; [`SealedStore::export_encrypted`] is the only
//! way out, and the store is the stand-in for a hardware module.

use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use chrono::{DateTime, SubsecRound, Utc};
use ipkpq_mldsa::Level;
use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;

use crate::directory::{DirectoryError, FilePk};
use crate::seed::{
    derive_private_partial, gen_matrices, validate_id, Dimensions, IdentityHandle, PrivMatrix,
    PubMatrix, Seed32, Seed64, SeedError, SeedMatrix,
};

pub const SEALED_FILE: &str = "sealed.bin";
pub const FILE_PK: &str = "file_pk.bin";
pub const REGISTRATIONS_FILE: &str = "registrations.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum CenterError {
    #[error("key center already initialized at {0}")]
    AlreadyInitialized(PathBuf),
    #[error("no key center at {0}")]
    NotInitialized(PathBuf),
    #[error("identity {0:?} already has an active registration")]
    Conflict(String),
    #[error("unknown identity {0:?}")]
    UnknownId(String),
    #[error("validity period must start before it ends")]
    InvalidPeriod,
    #[error("identity {id:?}: {reason}")]
    State { id: String, reason: &'static str },
    #[error("sealed store: {0}")]
    Seal(&'static str),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Directory(#[from] DirectoryError),
    #[error("registration table line {line}: {source}")]
    Table {
        line: usize,
        source: serde_json::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

struct SealedContents {
    priv_matrix: PrivMatrix,
    kc_rho: Seed32,
    kc_rho_prime: Seed64,
    kc_k: Seed32,
    reg_secrets: HashMap<String, Seed64>,
}

/// Simulated hardware store for the center's secrets.
pub struct SealedStore {
    inner: Mutex<SealedContents>,
}

impl std::fmt::Debug for SealedStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SealedStore(..)")
    }
}

/// Plaintext copy of the sealed contents, for tests.
#[cfg(any(test, feature = "seal-inspect"))]
#[derive(Clone)]
pub struct SealedView {
    pub priv_matrix: PrivMatrix,
    pub kc_rho: Seed32,
    pub kc_rho_prime: Seed64,
    pub kc_k: Seed32,
    pub reg_secrets: HashMap<String, Seed64>,
}

const SEAL_MAGIC: &[u8; 4] = b"IPKS";
const SEAL_VERSION: u8 = 1;

fn seal_key(passphrase: &[u8], salt: &[u8; 16]) -> Key {
    let mut x = Shake256::default();
    x.update(b"ipkpq-seal-v1");
    x.update(salt);
    x.update(passphrase);
    let mut k = [0u8; 32];
    x.finalize_xof().read(&mut k);
    Key::from(k)
}

impl SealedStore {
    fn new(contents: SealedContents) -> Self {
        SealedStore {
            inner: Mutex::new(contents),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, SealedContents> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn dims(&self) -> Dimensions {
        self.lock().priv_matrix.dims()
    }

    pub(crate) fn kc_rho(&self) -> Seed32 {
        self.lock().kc_rho
    }

    pub(crate) fn private_partial(&self, handle: &IdentityHandle) -> Seed64 {
        derive_private_partial(handle, &self.lock().priv_matrix)
    }

    pub(crate) fn reg_secret(&self, id: &str) -> Option<Seed64> {
        self.lock().reg_secrets.get(id).copied()
    }

    /// Draw a fresh registration secret for `id`, distinct from all others.
    fn draw_reg_secret<R: RngCore + CryptoRng>(&self, id: &str, rng: &mut R) {
        let mut guard = self.lock();
        loop {
            let mut s = [0u8; 64];
            rng.fill_bytes(&mut s);
            if guard.reg_secrets.values().all(|v| *v != s) {
                guard.reg_secrets.insert(id.to_owned(), s);
                return;
            }
        }
    }

    #[cfg(any(test, feature = "seal-inspect"))]
    pub fn inspect(&self) -> SealedView {
        let g = self.lock();
        SealedView {
            priv_matrix: g.priv_matrix.clone(),
            kc_rho: g.kc_rho,
            kc_rho_prime: g.kc_rho_prime,
            kc_k: g.kc_k,
            reg_secrets: g.reg_secrets.clone(),
        }
    }

    fn plaintext(&self) -> Vec<u8> {
        let g = self.lock();
        let dims = g.priv_matrix.dims();
        let mut out = Vec::new();
        out.extend_from_slice(&(dims.m() as u16).to_be_bytes());
        out.extend_from_slice(&(dims.h() as u16).to_be_bytes());
        out.extend_from_slice(&g.priv_matrix.to_bytes());
        out.extend_from_slice(&g.kc_rho);
        out.extend_from_slice(&g.kc_rho_prime);
        out.extend_from_slice(&g.kc_k);
        let mut ids: Vec<_> = g.reg_secrets.iter().collect();
        ids.sort_by(|a, b| a.0.cmp(b.0));
        out.extend_from_slice(&(ids.len() as u32).to_be_bytes());
        for (id, s) in ids {
            out.extend_from_slice(&(id.len() as u16).to_be_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(s);
        }
        out
    }

    fn from_plaintext(p: &[u8]) -> Result<Self, CenterError> {
        let mut cur = Cursor { buf: p, pos: 0 };
        let m = u16::from_be_bytes(cur.take()?) as usize;
        let h = u16::from_be_bytes(cur.take()?) as usize;
        let dims = Dimensions::relaxed(m, h)?;
        let priv_matrix = SeedMatrix::from_bytes(dims, cur.slice(dims.entries() * 64)?)?;
        let kc_rho = cur.take()?;
        let kc_rho_prime = cur.take()?;
        let kc_k = cur.take()?;
        let n = u32::from_be_bytes(cur.take()?);
        let mut reg_secrets = HashMap::new();
        for _ in 0..n {
            let len = u16::from_be_bytes(cur.take()?) as usize;
            let id = std::str::from_utf8(cur.slice(len)?)
                .map_err(|_| CenterError::Seal("identity is not UTF-8"))?
                .to_owned();
            reg_secrets.insert(id, cur.take()?);
        }
        if cur.pos != p.len() {
            return Err(CenterError::Seal("trailing bytes"));
        }
        Ok(SealedStore::new(SealedContents {
            priv_matrix,
            kc_rho,
            kc_rho_prime,
            kc_k,
            reg_secrets,
        }))
    }

    /// Encrypted backup: `"IPKS" | 1 | salt(16) | nonce(12) | ciphertext`.
    pub fn export_encrypted<R: RngCore + CryptoRng>(
        &self,
        passphrase: &[u8],
        rng: &mut R,
    ) -> Vec<u8> {
        let mut salt = [0u8; 16];
        let mut nonce = [0u8; 12];
        rng.fill_bytes(&mut salt);
        rng.fill_bytes(&mut nonce);
        let cipher = ChaCha20Poly1305::new(&seal_key(passphrase, &salt));
        let ct = cipher
            .encrypt(Nonce::from_slice(&nonce), self.plaintext().as_slice())
            .expect("encryption of in-memory buffer");
        let mut out = Vec::with_capacity(33 + ct.len());
        out.extend_from_slice(SEAL_MAGIC);
        out.push(SEAL_VERSION);
        out.extend_from_slice(&salt);
        out.extend_from_slice(&nonce);
        out.extend_from_slice(&ct);
        out
    }

    pub fn import_encrypted(bytes: &[u8], passphrase: &[u8]) -> Result<Self, CenterError> {
        if bytes.len() < 33 || &bytes[..4] != SEAL_MAGIC {
            return Err(CenterError::Seal("not a sealed store"));
        }
        if bytes[4] != SEAL_VERSION {
            return Err(CenterError::Seal("unsupported version"));
        }
        let salt: [u8; 16] = bytes[5..21].try_into().expect("length checked");
        let cipher = ChaCha20Poly1305::new(&seal_key(passphrase, &salt));
        let pt = cipher
            .decrypt(Nonce::from_slice(&bytes[21..33]), &bytes[33..])
            .map_err(|_| CenterError::Seal("wrong passphrase or corrupted store"))?;
        Self::from_plaintext(&pt)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn slice(&mut self, n: usize) -> Result<&'a [u8], CenterError> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or(CenterError::Seal("truncated"))?;
        self.pos += n;
        Ok(s)
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], CenterError> {
        Ok(self.slice(N)?.try_into().expect("sized slice"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    /// Registered; no key committed yet (or a renewal is under way).
    Pending,
    Active,
    Revoked,
}

/// One row of the published registration table. The registration secret
/// is deliberately absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub attributes: String,
    pub id: String,
    #[serde(rename = "R", with = "hex_seed")]
    pub r: Option<Seed32>,
    pub valid_from: DateTime<Utc>,
    pub valid_to: DateTime<Utc>,
    pub status: Status,
}

mod hex_seed {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[u8; 32]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(r) => s.serialize_str(&hex::encode(r)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[u8; 32]>, D::Error> {
        let Some(text) = Option::<String>::deserialize(d)? else {
            return Ok(None);
        };
        let bytes = hex::decode(&text).map_err(D::Error::custom)?;
        let r = bytes
            .try_into()
            .map_err(|_| D::Error::custom("R must be 32 bytes"))?;
        Ok(Some(r))
    }
}

/// Why a registration check failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegistrationFailure {
    Unknown,
    Inactive,
    Expired,
    RMismatch,
}

/// Append-only history of registration records; the latest line per id
/// is the current state.
#[derive(Debug, Clone, Default)]
pub struct RegistrationTable {
    log: Vec<RegistrationRecord>,
    latest: BTreeMap<String, usize>,
}

impl RegistrationTable {
    pub fn push(&mut self, rec: RegistrationRecord) {
        self.latest.insert(rec.id.clone(), self.log.len());
        self.log.push(rec);
    }

    pub fn get(&self, id: &str) -> Option<&RegistrationRecord> {
        self.latest.get(id).map(|&i| &self.log[i])
    }

    pub fn current(&self) -> impl Iterator<Item = &RegistrationRecord> {
        self.latest.values().map(|&i| &self.log[i])
    }

    pub fn history(&self) -> &[RegistrationRecord] {
        &self.log
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.log {
            out.push_str(&serde_json::to_string(rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CenterError> {
        let mut t = RegistrationTable::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(line).map_err(|source| CenterError::Table {
                line: i + 1,
                source,
            })?;
            t.push(rec);
        }
        Ok(t)
    }

    pub fn read(path: &Path) -> Result<Self, CenterError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Is `(id, r)` registered, active and inside its validity window?
    pub fn check(
        &self,
        id: &str,
        r: &Seed32,
        now: DateTime<Utc>,
    ) -> Result<&RegistrationRecord, RegistrationFailure> {
        let rec = self.get(id).ok_or(RegistrationFailure::Unknown)?;
        if rec.status != Status::Active {
            return Err(RegistrationFailure::Inactive);
        }
        if now < rec.valid_from || now > rec.valid_to {
            return Err(RegistrationFailure::Expired);
        }
        if rec.r.as_ref() != Some(r) {
            return Err(RegistrationFailure::RMismatch);
        }
        Ok(rec)
    }
}

/// The key center.
#[derive(Debug)]
pub struct KeyCenter {
    sealed: SealedStore,
    pub_matrix: PubMatrix,
    file_pk: FilePk,
    registrations: RegistrationTable,
}

impl KeyCenter {
    /// Fresh in-memory center: matrices, center seeds and an empty File_PK.
    pub fn init<R: RngCore + CryptoRng>(level: Level, dims: Dimensions, rng: &mut R) -> Self {
        let (priv_matrix, pub_matrix) = gen_matrices(dims, rng);
        let mut kc_rho = [0u8; 32];
        let mut kc_rho_prime = [0u8; 64];
        let mut kc_k = [0u8; 32];
        rng.fill_bytes(&mut kc_rho);
        rng.fill_bytes(&mut kc_rho_prime);
        rng.fill_bytes(&mut kc_k);
        Self::from_parts(
            level,
            priv_matrix,
            pub_matrix,
            kc_rho,
            kc_rho_prime,
            kc_k,
        )
    }

    /// A center over caller-supplied material, for pinned fixtures.
    pub fn from_parts(
        level: Level,
        priv_matrix: PrivMatrix,
        pub_matrix: PubMatrix,
        kc_rho: Seed32,
        kc_rho_prime: Seed64,
        kc_k: Seed32,
    ) -> Self {
        assert_eq!(priv_matrix.dims(), pub_matrix.dims(), "matrix dimensions differ");
        let file_pk = FilePk::create(level, &pub_matrix).expect("dimensions fit the header");
        KeyCenter {
            sealed: SealedStore::new(SealedContents {
                priv_matrix,
                kc_rho,
                kc_rho_prime,
                kc_k,
                reg_secrets: HashMap::new(),
            }),
            pub_matrix,
            file_pk,
            registrations: RegistrationTable::default(),
        }
    }

    /// Initialize a persistent center in `dir`. Fails if one exists.
    pub fn init_at<R: RngCore + CryptoRng>(
        dir: &Path,
        level: Level,
        dims: Dimensions,
        passphrase: &[u8],
        rng: &mut R,
    ) -> Result<Self, CenterError> {
        if dir.join(SEALED_FILE).exists() {
            return Err(CenterError::AlreadyInitialized(dir.to_owned()));
        }
        std::fs::create_dir_all(dir)?;
        let kc = Self::init(level, dims, rng);
        kc.save(dir, passphrase, rng)?;
        Ok(kc)
    }

    pub fn open(dir: &Path, passphrase: &[u8]) -> Result<Self, CenterError> {
        let sealed_path = dir.join(SEALED_FILE);
        if !sealed_path.exists() {
            return Err(CenterError::NotInitialized(dir.to_owned()));
        }
        let sealed = SealedStore::import_encrypted(&std::fs::read(sealed_path)?, passphrase)?;
        let file_pk = FilePk::read(&dir.join(FILE_PK))?;
        let reg_path = dir.join(REGISTRATIONS_FILE);
        let registrations = if reg_path.exists() {
            RegistrationTable::read(&reg_path)?
        } else {
            RegistrationTable::default()
        };
        Ok(KeyCenter {
            pub_matrix: file_pk.extract_matrix(),
            sealed,
            file_pk,
            registrations,
        })
    }

    pub fn save<R: RngCore + CryptoRng>(
        &self,
        dir: &Path,
        passphrase: &[u8],
        rng: &mut R,
    ) -> Result<(), CenterError> {
        let sealed = self.sealed.export_encrypted(passphrase, rng);
        let tmp = dir.join("sealed.tmp");
        std::fs::write(&tmp, sealed)?;
        std::fs::rename(tmp, dir.join(SEALED_FILE))?;
        self.file_pk.write(&dir.join(FILE_PK))?;
        let mut f = std::fs::File::create(dir.join(REGISTRATIONS_FILE))?;
        f.write_all(self.registrations.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn level(&self) -> Level {
        self.file_pk.level()
    }

    pub fn dims(&self) -> Dimensions {
        self.pub_matrix.dims()
    }

    pub fn public_matrix(&self) -> &PubMatrix {
        &self.pub_matrix
    }

    pub fn sealed(&self) -> &SealedStore {
        &self.sealed
    }

    pub fn file_pk(&self) -> &FilePk {
        &self.file_pk
    }

    pub(crate) fn file_pk_mut(&mut self) -> &mut FilePk {
        &mut self.file_pk
    }

    pub fn registrations(&self) -> &RegistrationTable {
        &self.registrations
    }

    /// Current File_PK bytes.
    pub fn publish_file_pk(&self) -> Vec<u8> {
        self.file_pk.as_bytes().to_vec()
    }

    /// Write File_PK and the registration table into `dir`.
    pub fn publish_to(&self, dir: &Path) -> Result<(), CenterError> {
        std::fs::create_dir_all(dir)?;
        self.file_pk.write(&dir.join(FILE_PK))?;
        std::fs::write(dir.join(REGISTRATIONS_FILE), self.registrations.to_jsonl())?;
        Ok(())
    }

    pub fn register<R: RngCore + CryptoRng>(
        &mut self,
        attributes: &str,
        id: &str,
        valid_from: DateTime<Utc>,
        valid_to: DateTime<Utc>,
        rng: &mut R,
    ) -> Result<RegistrationRecord, CenterError> {
        validate_id(id)?;
        let valid_from = valid_from.trunc_subsecs(0);
        let valid_to = valid_to.trunc_subsecs(0);
        if valid_from >= valid_to {
            return Err(CenterError::InvalidPeriod);
        }
        if let Some(old) = self.registrations.get(id) {
            if old.status != Status::Revoked && old.valid_to > valid_from {
                return Err(CenterError::Conflict(id.to_owned()));
            }
        }
        self.sealed.draw_reg_secret(id, rng);
        let rec = RegistrationRecord {
            attributes: attributes.to_owned(),
            id: id.to_owned(),
            r: None,
            valid_from,
            valid_to,
            status: Status::Pending,
        };
        self.registrations.push(rec.clone());
        Ok(rec)
    }

    /// Extend a registration and reopen it for a fresh key generation run.
    pub fn renew<R: RngCore + CryptoRng>(
        &mut self,
        id: &str,
        new_valid_to: DateTime<Utc>,
        rng: &mut R,
    ) -> Result<RegistrationRecord, CenterError> {
        let mut rec = self
            .registrations
            .get(id)
            .cloned()
            .ok_or_else(|| CenterError::UnknownId(id.to_owned()))?;
        if rec.status == Status::Revoked {
            return Err(CenterError::State {
                id: id.to_owned(),
                reason: "revoked registrations cannot be renewed",
            });
        }
        let new_valid_to = new_valid_to.trunc_subsecs(0);
        if new_valid_to <= rec.valid_from {
            return Err(CenterError::InvalidPeriod);
        }
        self.sealed.draw_reg_secret(id, rng);
        rec.valid_to = new_valid_to;
        rec.r = None;
        rec.status = Status::Pending;
        self.registrations.push(rec.clone());
        Ok(rec)
    }

    pub fn revoke(&mut self, id: &str) -> Result<RegistrationRecord, CenterError> {
        let mut rec = self
            .registrations
            .get(id)
            .cloned()
            .ok_or_else(|| CenterError::UnknownId(id.to_owned()))?;
        rec.status = Status::Revoked;
        self.registrations.push(rec.clone());
        Ok(rec)
    }

    /// Record `R` once the center has answered the first protocol message.
    pub(crate) fn bind_r(&mut self, id: &str, r: Seed32) -> Result<(), CenterError> {
        let mut rec = self.pending_record(id)?;
        rec.r = Some(r);
        self.registrations.push(rec);
        Ok(())
    }

    pub(crate) fn activate(&mut self, id: &str) -> Result<(), CenterError> {
        let mut rec = self
            .registrations
            .get(id)
            .cloned()
            .ok_or_else(|| CenterError::UnknownId(id.to_owned()))?;
        rec.status = Status::Active;
        self.registrations.push(rec);
        Ok(())
    }

    /// The record for `id`, provided it awaits key generation.
    pub(crate) fn pending_record(&self, id: &str) -> Result<RegistrationRecord, CenterError> {
        let rec = self
            .registrations
            .get(id)
            .ok_or_else(|| CenterError::UnknownId(id.to_owned()))?;
        match (rec.status, rec.r) {
            (Status::Pending, None) => Ok(rec.clone()),
            (Status::Pending, Some(_)) => Err(CenterError::State {
                id: id.to_owned(),
                reason: "key generation already in progress",
            }),
            (Status::Active, _) => Err(CenterError::State {
                id: id.to_owned(),
                reason: "key already generated",
            }),
            (Status::Revoked, _) => Err(CenterError::State {
                id: id.to_owned(),
                reason: "registration revoked",
            }),
        }
    }
}
