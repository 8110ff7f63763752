//! Resource certificates, ROAs and manifests with their TLV encodings.
//!
//! Both key modes share one certificate layout. Only the subject key field
//! differs: a standard certificate carries the full ML-DSA public key, an
//! identity-mode certificate carries `R || id`, from which a relying party
//! resolves the key itself. Signatures cover the encoding with an empty
//! signature field.

use std::collections::BTreeMap;

use chrono::{DateTime, SubsecRound, TimeZone, Utc};
use ipkpq_mldsa::Level;
use serde::{Deserialize, Serialize};
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;

use super::inr::{AsRange, InrSet, IpPrefix};
use super::tlv::{Reader, TlvError, Writer};
use crate::seed::{validate_id, Seed32};

mod tag {
    pub const VERSION: u8 = 0x01;
    pub const MODE: u8 = 0x02;
    pub const LEVEL: u8 = 0x03;
    pub const SERIAL: u8 = 0x04;
    pub const SIG_ALG: u8 = 0x05;
    pub const ISSUER: u8 = 0x06;
    pub const SUBJECT: u8 = 0x07;
    pub const VALIDITY: u8 = 0x08;
    pub const NOT_BEFORE: u8 = 0x09;
    pub const NOT_AFTER: u8 = 0x0a;
    pub const KEY: u8 = 0x0b;
    pub const SKI: u8 = 0x0c;
    pub const AKI: u8 = 0x0d;
    pub const INR: u8 = 0x0e;
    pub const PREFIXES: u8 = 0x0f;
    pub const PREFIX: u8 = 0x10;
    pub const AS_RANGES: u8 = 0x11;
    pub const AS_RANGE: u8 = 0x12;
    pub const SIA: u8 = 0x13;
    pub const CA_REPOSITORY: u8 = 0x14;
    pub const MANIFEST_URI: u8 = 0x15;
    pub const NOTIFY_URI: u8 = 0x16;
    pub const AIA: u8 = 0x17;
    pub const CRLDP: u8 = 0x18;
    pub const POLICY: u8 = 0x19;
    pub const SIGNATURE: u8 = 0x1a;
    pub const CERT: u8 = 0x30;
    pub const TBS: u8 = 0x31;
    pub const ROA: u8 = 0x40;
    pub const SIGNER: u8 = 0x42;
    pub const AUTH: u8 = 0x43;
    pub const SIGNING_TIME: u8 = 0x44;
    pub const MANIFEST: u8 = 0x50;
    pub const ENTRY: u8 = 0x51;
    pub const NAME: u8 = 0x52;
    pub const DIGEST: u8 = 0x53;
    pub const NUMBER: u8 = 0x54;
}

const FORMAT_VERSION: u8 = 1;

/// The resource-certificate policy identifier.
pub const RPKI_POLICY_OID: &str = "1.3.6.1.5.5.7.14.2";

/// SHAKE256 digest with 32 bytes of output.
pub fn digest(bytes: &[u8]) -> [u8; 32] {
    let mut x = Shake256::default();
    x.update(bytes);
    let mut out = [0u8; 32];
    x.finalize_xof().read(&mut out);
    out
}

/// Key identifier: the first 20 bytes of the digest of the key material.
pub fn key_identifier(material: &[u8]) -> [u8; 20] {
    digest(material)[..20].try_into().expect("sized")
}

pub fn signature_algorithm(level: Level) -> &'static str {
    match level {
        Level::MlDsa44 => "2.16.840.1.101.3.4.3.17",
        Level::MlDsa65 => "2.16.840.1.101.3.4.3.18",
        Level::MlDsa87 => "2.16.840.1.101.3.4.3.19",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Standard,
    Ipkpq,
}

impl Mode {
    fn code(self) -> u8 {
        match self {
            Mode::Standard => 1,
            Mode::Ipkpq => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(Mode::Standard),
            2 => Some(Mode::Ipkpq),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Standard => "standard",
            Mode::Ipkpq => "ipkpq",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Mode::Standard),
            "ipkpq" => Ok(Mode::Ipkpq),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

/// The key a certificate binds to its subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubjectKey {
    Standard { pk: Vec<u8> },
    Ipkpq { id: String, r: Seed32 },
}

impl SubjectKey {
    pub fn mode(&self) -> Mode {
        match self {
            SubjectKey::Standard { .. } => Mode::Standard,
            SubjectKey::Ipkpq { .. } => Mode::Ipkpq,
        }
    }

    /// The encoded key field.
    pub fn material(&self) -> Vec<u8> {
        match self {
            SubjectKey::Standard { pk } => pk.clone(),
            SubjectKey::Ipkpq { id, r } => [&r[..], id.as_bytes()].concat(),
        }
    }

    fn decode(mode: Mode, level: Level, r: &mut Reader<'_>) -> Result<Self, TlvError> {
        let offset = r.offset();
        let v = r.bytes(tag::KEY)?;
        let invalid = |what| TlvError::Value { offset, what };
        match mode {
            Mode::Standard if v.len() == level.pk_len() => Ok(SubjectKey::Standard { pk: v.to_vec() }),
            Mode::Standard => Err(invalid("public key length")),
            Mode::Ipkpq => {
                let (id, r) = decode_identity(v, offset)?;
                Ok(SubjectKey::Ipkpq { id, r })
            }
        }
    }
}

/// `R || id`, as carried by identity-mode keys and ROAs.
fn decode_identity(v: &[u8], offset: usize) -> Result<(String, Seed32), TlvError> {
    let invalid = TlvError::Value {
        offset,
        what: "identity",
    };
    if v.len() <= 32 {
        return Err(invalid);
    }
    let id = std::str::from_utf8(&v[32..]).map_err(|_| invalid.clone())?;
    validate_id(id).map_err(|_| invalid)?;
    Ok((id.to_owned(), v[..32].try_into().expect("sized")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validity {
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
}

impl Validity {
    /// Whole-second window.
    pub fn new(not_before: DateTime<Utc>, not_after: DateTime<Utc>) -> Self {
        Validity {
            not_before: not_before.trunc_subsecs(0),
            not_after: not_after.trunc_subsecs(0),
        }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.not_before <= t && t <= self.not_after
    }

    fn encode(&self, w: &mut Writer) {
        w.nested(tag::VALIDITY, |w| {
            w.i64(tag::NOT_BEFORE, self.not_before.timestamp())
                .i64(tag::NOT_AFTER, self.not_after.timestamp());
        });
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, TlvError> {
        let mut v = r.nested(tag::VALIDITY)?;
        let ts = |v: &mut Reader<'_>, t| -> Result<DateTime<Utc>, TlvError> {
            let secs = v.i64(t)?;
            Utc.timestamp_opt(secs, 0)
                .single()
                .ok_or_else(|| v.invalid("timestamp"))
        };
        let not_before = ts(&mut v, tag::NOT_BEFORE)?;
        let not_after = ts(&mut v, tag::NOT_AFTER)?;
        v.finish()?;
        Ok(Validity {
            not_before,
            not_after,
        })
    }
}

/// Where a CA publishes and where its issuer's objects live.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Locations {
    pub ca_repository: String,
    pub manifest: String,
    pub notify: String,
    pub issuer_cert: String,
    pub crl: String,
}

fn encode_inr(w: &mut Writer, inr: &InrSet) {
    w.nested(tag::INR, |w| {
        w.nested(tag::PREFIXES, |w| {
            for p in inr.prefixes() {
                let mut v = Vec::with_capacity(18);
                match *p {
                    IpPrefix::V4 { addr, len } => {
                        v.extend_from_slice(&[4, len]);
                        v.extend_from_slice(&addr.to_be_bytes());
                    }
                    IpPrefix::V6 { addr, len } => {
                        v.extend_from_slice(&[6, len]);
                        v.extend_from_slice(&addr.to_be_bytes());
                    }
                }
                w.bytes(tag::PREFIX, &v);
            }
        });
        w.nested(tag::AS_RANGES, |w| {
            for r in inr.as_ranges() {
                let mut v = [0u8; 8];
                v[..4].copy_from_slice(&r.lo.to_be_bytes());
                v[4..].copy_from_slice(&r.hi.to_be_bytes());
                w.bytes(tag::AS_RANGE, &v);
            }
        });
    });
}

fn decode_inr(r: &mut Reader<'_>) -> Result<InrSet, TlvError> {
    let mut inr = r.nested(tag::INR)?;
    let mut pr = inr.nested(tag::PREFIXES)?;
    let mut prefixes = Vec::new();
    while !pr.is_empty() {
        let offset = pr.offset();
        let v = pr.bytes(tag::PREFIX)?;
        let bad = TlvError::Value {
            offset,
            what: "prefix",
        };
        let p = match (v.first(), v.len()) {
            (Some(4), 6) => IpPrefix::v4(u32::from_be_bytes(v[2..6].try_into().expect("sized")).into(), v[1]),
            (Some(6), 18) => IpPrefix::v6(u128::from_be_bytes(v[2..18].try_into().expect("sized")).into(), v[1]),
            _ => return Err(bad),
        }
        .map_err(|_| bad.clone())?;
        if prefixes.last().is_some_and(|last| *last >= p) {
            return Err(bad);
        }
        prefixes.push(p);
    }
    let mut ar = inr.nested(tag::AS_RANGES)?;
    let mut ranges = Vec::new();
    while !ar.is_empty() {
        let offset = ar.offset();
        let v: [u8; 8] = ar.fixed(tag::AS_RANGE, "AS range")?;
        let lo = u32::from_be_bytes(v[..4].try_into().expect("sized"));
        let hi = u32::from_be_bytes(v[4..].try_into().expect("sized"));
        ranges.push(AsRange::new(lo, hi).map_err(|_| TlvError::Value {
            offset,
            what: "AS range",
        })?);
    }
    inr.finish()?;
    let set = InrSet::new(prefixes, ranges.clone());
    if set.as_ranges() != ranges.as_slice() {
        return Err(inr.invalid("non-canonical AS ranges"));
    }
    Ok(set)
}

fn decode_level(r: &mut Reader<'_>) -> Result<Level, TlvError> {
    let offset = r.offset();
    Level::from_code(r.u8(tag::LEVEL)?).ok_or(TlvError::Value {
        offset,
        what: "level",
    })
}

fn decode_mode(r: &mut Reader<'_>) -> Result<Mode, TlvError> {
    let offset = r.offset();
    Mode::from_code(r.u8(tag::MODE)?).ok_or(TlvError::Value {
        offset,
        what: "mode",
    })
}

fn expect_version(r: &mut Reader<'_>) -> Result<(), TlvError> {
    let offset = r.offset();
    if r.u8(tag::VERSION)? != FORMAT_VERSION {
        return Err(TlvError::Value {
            offset,
            what: "version",
        });
    }
    Ok(())
}

fn expect_sig_alg(r: &mut Reader<'_>, level: Level) -> Result<(), TlvError> {
    let offset = r.offset();
    if r.str(tag::SIG_ALG)? != signature_algorithm(level) {
        return Err(TlvError::Value {
            offset,
            what: "signature algorithm",
        });
    }
    Ok(())
}

/// A resource certificate, CA or end-entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceCert {
    pub level: Level,
    pub serial: u64,
    pub issuer: String,
    pub subject: String,
    pub validity: Validity,
    pub key: SubjectKey,
    pub ski: [u8; 20],
    pub aki: [u8; 20],
    pub inr: InrSet,
    pub locations: Locations,
    pub signature: Vec<u8>,
}

impl ResourceCert {
    pub fn mode(&self) -> Mode {
        self.key.mode()
    }

    pub fn is_self_signed(&self) -> bool {
        self.issuer == self.subject && self.ski == self.aki
    }

    /// The full public key of a standard-mode certificate.
    pub fn public_key(&self) -> Option<&[u8]> {
        match &self.key {
            SubjectKey::Standard { pk } => Some(pk),
            SubjectKey::Ipkpq { .. } => None,
        }
    }

    fn encode_with(&self, signature: &[u8]) -> Vec<u8> {
        let mut w = Writer::new();
        w.nested(tag::CERT, |w| {
            w.nested(tag::TBS, |w| {
                w.u8(tag::VERSION, FORMAT_VERSION)
                    .u8(tag::MODE, self.mode().code())
                    .u8(tag::LEVEL, self.level.code())
                    .u64(tag::SERIAL, self.serial)
                    .str(tag::SIG_ALG, signature_algorithm(self.level))
                    .str(tag::ISSUER, &self.issuer)
                    .str(tag::SUBJECT, &self.subject);
                self.validity.encode(w);
                w.bytes(tag::KEY, &self.key.material())
                    .bytes(tag::SKI, &self.ski)
                    .bytes(tag::AKI, &self.aki);
                encode_inr(w, &self.inr);
                w.nested(tag::SIA, |w| {
                    w.str(tag::CA_REPOSITORY, &self.locations.ca_repository)
                        .str(tag::MANIFEST_URI, &self.locations.manifest)
                        .str(tag::NOTIFY_URI, &self.locations.notify);
                })
                .str(tag::AIA, &self.locations.issuer_cert)
                .str(tag::CRLDP, &self.locations.crl)
                .str(tag::POLICY, RPKI_POLICY_OID);
            });
            w.bytes(tag::SIGNATURE, signature);
        });
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        self.encode_with(&self.signature)
    }

    /// The signed bytes: the encoding with an empty signature.
    pub fn tbs(&self) -> Vec<u8> {
        self.encode_with(&[])
    }

    pub fn digest(&self) -> [u8; 32] {
        digest(&self.encode())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        let mut outer = Reader::new(bytes);
        let cert = Self::decode_from(&mut outer)?;
        outer.finish()?;
        Ok(cert)
    }

    fn decode_from(outer: &mut Reader<'_>) -> Result<Self, TlvError> {
        let mut c = outer.nested(tag::CERT)?;
        let mut t = c.nested(tag::TBS)?;
        expect_version(&mut t)?;
        let mode = decode_mode(&mut t)?;
        let level = decode_level(&mut t)?;
        let serial = t.u64(tag::SERIAL)?;
        expect_sig_alg(&mut t, level)?;
        let issuer = t.str(tag::ISSUER)?.to_owned();
        let subject = t.str(tag::SUBJECT)?.to_owned();
        let validity = Validity::decode(&mut t)?;
        let key = SubjectKey::decode(mode, level, &mut t)?;
        let ski = t.fixed(tag::SKI, "key identifier")?;
        let aki = t.fixed(tag::AKI, "key identifier")?;
        let inr = decode_inr(&mut t)?;
        let mut sia = t.nested(tag::SIA)?;
        let ca_repository = sia.str(tag::CA_REPOSITORY)?.to_owned();
        let manifest = sia.str(tag::MANIFEST_URI)?.to_owned();
        let notify = sia.str(tag::NOTIFY_URI)?.to_owned();
        sia.finish()?;
        let issuer_cert = t.str(tag::AIA)?.to_owned();
        let crl = t.str(tag::CRLDP)?.to_owned();
        let policy_at = t.offset();
        if t.str(tag::POLICY)? != RPKI_POLICY_OID {
            return Err(TlvError::Value {
                offset: policy_at,
                what: "policy",
            });
        }
        t.finish()?;
        let signature = c.bytes(tag::SIGNATURE)?.to_vec();
        c.finish()?;
        Ok(ResourceCert {
            level,
            serial,
            issuer,
            subject,
            validity,
            key,
            ski,
            aki,
            inr,
            locations: Locations {
                ca_repository,
                manifest,
                notify,
                issuer_cert,
                crl,
            },
            signature,
        })
    }
}

/// How a ROA's signature is tied to a key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoaAuth {
    /// A one-off end-entity certificate issued by the signing CA.
    Standard { ee_cert: Box<ResourceCert> },
    /// The signing CA's explicit identity; its key is resolved from it.
    Ipkpq { id: String, r: Seed32 },
}

/// A route origin authorization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoaObject {
    pub level: Level,
    pub serial: u64,
    /// Name of the issuing CA.
    pub signer: String,
    pub auth: RoaAuth,
    pub signing_time: DateTime<Utc>,
    /// Authorized prefixes and the origin AS.
    pub inr: InrSet,
    pub signature: Vec<u8>,
}

impl RoaObject {
    pub fn mode(&self) -> Mode {
        match self.auth {
            RoaAuth::Standard { .. } => Mode::Standard,
            RoaAuth::Ipkpq { .. } => Mode::Ipkpq,
        }
    }

    fn encode_with(&self, signature: &[u8]) -> Vec<u8> {
        let mut w = Writer::new();
        w.nested(tag::ROA, |w| {
            w.nested(tag::TBS, |w| {
                w.u8(tag::VERSION, FORMAT_VERSION)
                    .u8(tag::MODE, self.mode().code())
                    .u8(tag::LEVEL, self.level.code())
                    .u64(tag::SERIAL, self.serial)
                    .str(tag::SIG_ALG, signature_algorithm(self.level))
                    .str(tag::SIGNER, &self.signer);
                match &self.auth {
                    RoaAuth::Standard { ee_cert } => w.bytes(tag::AUTH, &ee_cert.encode()),
                    RoaAuth::Ipkpq { id, r } => w.bytes(tag::AUTH, &[&r[..], id.as_bytes()].concat()),
                };
                w.i64(tag::SIGNING_TIME, self.signing_time.timestamp());
                encode_inr(w, &self.inr);
            });
            w.bytes(tag::SIGNATURE, signature);
        });
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        self.encode_with(&self.signature)
    }

    pub fn tbs(&self) -> Vec<u8> {
        self.encode_with(&[])
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        let mut outer = Reader::new(bytes);
        let mut o = outer.nested(tag::ROA)?;
        let mut t = o.nested(tag::TBS)?;
        expect_version(&mut t)?;
        let mode = decode_mode(&mut t)?;
        let level = decode_level(&mut t)?;
        let serial = t.u64(tag::SERIAL)?;
        expect_sig_alg(&mut t, level)?;
        let signer = t.str(tag::SIGNER)?.to_owned();
        let auth = match mode {
            Mode::Standard => {
                let mut a = t.nested(tag::AUTH)?;
                let ee = ResourceCert::decode_from(&mut a)?;
                a.finish()?;
                RoaAuth::Standard {
                    ee_cert: Box::new(ee),
                }
            }
            Mode::Ipkpq => {
                let offset = t.offset();
                let (id, r) = decode_identity(t.bytes(tag::AUTH)?, offset)?;
                RoaAuth::Ipkpq { id, r }
            }
        };
        let time_at = t.offset();
        let signing_time = Utc
            .timestamp_opt(t.i64(tag::SIGNING_TIME)?, 0)
            .single()
            .ok_or(TlvError::Value {
                offset: time_at,
                what: "timestamp",
            })?;
        let inr = decode_inr(&mut t)?;
        t.finish()?;
        let signature = o.bytes(tag::SIGNATURE)?.to_vec();
        o.finish()?;
        outer.finish()?;
        Ok(RoaObject {
            level,
            serial,
            signer,
            auth,
            signing_time,
            inr,
            signature,
        })
    }
}

/// Unsigned list of published objects and their digests.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub issuer: String,
    pub number: u64,
    pub entries: BTreeMap<String, [u8; 32]>,
}

impl Manifest {
    pub fn new(issuer: impl Into<String>) -> Self {
        Manifest {
            issuer: issuer.into(),
            number: 0,
            entries: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, name: &str, object: &[u8]) {
        self.entries.insert(name.to_owned(), digest(object));
        self.number += 1;
    }

    /// The object matches its listed digest.
    pub fn check(&self, name: &str, object: &[u8]) -> bool {
        self.entries.get(name) == Some(&digest(object))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.nested(tag::MANIFEST, |w| {
            w.u8(tag::VERSION, FORMAT_VERSION)
                .str(tag::ISSUER, &self.issuer)
                .u64(tag::NUMBER, self.number);
            for (name, d) in &self.entries {
                w.nested(tag::ENTRY, |w| {
                    w.str(tag::NAME, name).bytes(tag::DIGEST, d);
                });
            }
        });
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        let mut outer = Reader::new(bytes);
        let mut m = outer.nested(tag::MANIFEST)?;
        expect_version(&mut m)?;
        let issuer = m.str(tag::ISSUER)?.to_owned();
        let number = m.u64(tag::NUMBER)?;
        let mut entries = BTreeMap::new();
        while !m.is_empty() {
            let mut e = m.nested(tag::ENTRY)?;
            let at = e.offset();
            let name = e.str(tag::NAME)?.to_owned();
            let d = e.fixed(tag::DIGEST, "digest")?;
            e.finish()?;
            if entries.keys().next_back().is_some_and(|last: &String| *last >= name) {
                return Err(TlvError::Value {
                    offset: at,
                    what: "entry order",
                });
            }
            entries.insert(name, d);
        }
        outer.finish()?;
        Ok(Manifest {
            issuer,
            number,
            entries,
        })
    }
}
