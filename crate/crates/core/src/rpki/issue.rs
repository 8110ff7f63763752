//! Issuing resource certificates and ROAs down a CA hierarchy.
//!
//! A standard-mode ROA costs a fresh end-entity key pair and two
//! signatures (EE certificate, then ROA). An identity-mode ROA is signed
//! once, directly by the issuing CA.

use std::sync::Arc;

use chrono::{DateTime, SubsecRound, Utc};
use ipkpq_mldsa::{KeyPair, Level};
use rand_core::{CryptoRng, RngCore};

use super::inr::InrSet;
use super::objects::{
    key_identifier, Locations, Manifest, Mode, ResourceCert, RoaAuth, RoaObject, SubjectKey,
    Validity,
};
use super::repo::{self, Repository};
use crate::protocol::CaKey;
use crate::seed::{validate_id, Seed32, ID_SEPARATOR};

#[derive(Debug, thiserror::Error)]
pub enum IssueError {
    #[error("resources of {subject} are not contained in the issuer's")]
    InrNotContained { subject: String },
    #[error("{child} key under a {parent} issuer")]
    ModeMismatch { parent: Mode, child: Mode },
    #[error("key is not an ML-DSA-{expected} key")]
    LevelMismatch { expected: u8 },
    #[error("invalid CA label {0:?}")]
    Label(String),
    #[error("keys do not match the certificate of {0}")]
    KeyMismatch(String),
    #[error("signing failed: {0}")]
    Sign(#[from] ipkpq_mldsa::Error),
    #[error(transparent)]
    Repository(#[from] std::io::Error),
}

/// Where signatures and key pairs come from.
pub trait SignerBackend: Send + Sync + std::fmt::Debug {
    fn keygen(&self, level: Level, xi: &[u8; 32]) -> KeyPair;
    fn sign(&self, sk: &[u8], msg: &[u8]) -> Result<Vec<u8>, ipkpq_mldsa::Error>;
}

/// Deterministic pure ML-DSA with an empty context.
#[derive(Debug, Default, Clone, Copy)]
pub struct Software;

impl SignerBackend for Software {
    fn keygen(&self, level: Level, xi: &[u8; 32]) -> KeyPair {
        ipkpq_mldsa::keygen_from_seed(level, xi)
    }

    fn sign(&self, sk: &[u8], msg: &[u8]) -> Result<Vec<u8>, ipkpq_mldsa::Error> {
        ipkpq_mldsa::sign(sk, msg, b"")
    }
}

/// Operation counts for one issuance step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IssueStats {
    pub sign_ops: u64,
    pub keygens: u64,
}

impl std::ops::AddAssign for IssueStats {
    fn add_assign(&mut self, o: Self) {
        self.sign_ops += o.sign_ops;
        self.keygens += o.keygens;
    }
}

/// A CA's signing key and what its certificate says about it.
#[derive(Clone)]
pub enum CaKeys {
    Standard { sk: Vec<u8>, pk: Vec<u8> },
    Ipkpq { sk: Vec<u8>, pk: Vec<u8>, id: String, r: Seed32 },
}

impl std::fmt::Debug for CaKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaKeys::Standard { .. } => f.write_str("CaKeys::Standard"),
            CaKeys::Ipkpq { id, r, .. } => f
                .debug_struct("CaKeys::Ipkpq")
                .field("id", id)
                .field("r", &hex::encode(r))
                .finish_non_exhaustive(),
        }
    }
}

impl CaKeys {
    pub fn generate_standard<R: RngCore + CryptoRng>(
        level: Level,
        backend: &dyn SignerBackend,
        rng: &mut R,
    ) -> Self {
        let mut xi = [0u8; 32];
        rng.fill_bytes(&mut xi);
        let kp = backend.keygen(level, &xi);
        CaKeys::Standard { sk: kp.sk, pk: kp.pk }
    }

    /// Keys from a completed key generation run with the key center.
    pub fn from_protocol(id: impl Into<String>, key: CaKey) -> Self {
        CaKeys::Ipkpq {
            sk: key.sk,
            pk: key.pk,
            id: id.into(),
            r: key.r,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            CaKeys::Standard { .. } => Mode::Standard,
            CaKeys::Ipkpq { .. } => Mode::Ipkpq,
        }
    }

    pub fn sk(&self) -> &[u8] {
        match self {
            CaKeys::Standard { sk, .. } | CaKeys::Ipkpq { sk, .. } => sk,
        }
    }

    pub fn pk(&self) -> &[u8] {
        match self {
            CaKeys::Standard { pk, .. } | CaKeys::Ipkpq { pk, .. } => pk,
        }
    }

    pub fn subject_key(&self) -> SubjectKey {
        match self {
            CaKeys::Standard { pk, .. } => SubjectKey::Standard { pk: pk.clone() },
            CaKeys::Ipkpq { id, r, .. } => SubjectKey::Ipkpq { id: id.clone(), r: *r },
        }
    }

    fn check_level(&self, level: Level) -> Result<(), IssueError> {
        if Level::from_sk_len(self.sk().len()) == Some(level) && Level::from_pk_len(self.pk().len()) == Some(level) {
            Ok(())
        } else {
            Err(IssueError::LevelMismatch {
                expected: level.number(),
            })
        }
    }
}

/// A certification authority and its repository state.
#[derive(Debug, Clone)]
pub struct CaNode {
    name: String,
    level: Level,
    inr: InrSet,
    keys: CaKeys,
    parent: Option<String>,
    rc: ResourceCert,
    validity: Validity,
    manifest: Manifest,
    next_serial: u64,
    backend: Arc<dyn SignerBackend>,
}

fn locations(name: &str, issuer: &str, aki: &[u8; 20], is_root: bool) -> Locations {
    Locations {
        ca_repository: repo::uri(&format!("{}/", repo::ca_path(name))),
        manifest: repo::uri(&repo::manifest_path(name)),
        notify: repo::NOTIFY_URI.to_owned(),
        issuer_cert: if is_root {
            String::new()
        } else {
            repo::uri(&repo::rc_path(issuer))
        },
        crl: repo::uri(&format!("{}/{}.crl", repo::ca_path(issuer), hex::encode(aki))),
    }
}

#[allow(clippy::too_many_arguments)]
fn unsigned_cert(
    level: Level,
    serial: u64,
    issuer: &str,
    subject: &str,
    validity: Validity,
    key: SubjectKey,
    aki: [u8; 20],
    inr: InrSet,
    locations: Locations,
) -> ResourceCert {
    ResourceCert {
        level,
        serial,
        issuer: issuer.to_owned(),
        subject: subject.to_owned(),
        validity,
        ski: key_identifier(&key.material()),
        key,
        aki,
        inr,
        locations,
        signature: Vec::new(),
    }
}

fn check_label(label: &str) -> Result<(), IssueError> {
    let bad = label.is_empty()
        || label.contains(ID_SEPARATOR)
        || label.contains(['/', '\\', '#'])
        || label == "."
        || label == ".."
        || label == repo::ROA_DIR;
    if bad {
        return Err(IssueError::Label(label.to_owned()));
    }
    Ok(())
}

impl CaNode {
    /// A trust anchor with a self-signed certificate.
    pub fn root(
        name: &str,
        level: Level,
        keys: CaKeys,
        inr: InrSet,
        validity: Validity,
    ) -> Result<(CaNode, IssueStats), IssueError> {
        Self::root_with_backend(name, level, keys, inr, validity, Arc::new(Software))
    }

    pub fn root_with_backend(
        name: &str,
        level: Level,
        keys: CaKeys,
        inr: InrSet,
        validity: Validity,
        backend: Arc<dyn SignerBackend>,
    ) -> Result<(CaNode, IssueStats), IssueError> {
        validate_id(name).map_err(|_| IssueError::Label(name.to_owned()))?;
        name.split(ID_SEPARATOR).try_for_each(check_label)?;
        keys.check_level(level)?;
        let key = keys.subject_key();
        let ski = key_identifier(&key.material());
        let mut rc = unsigned_cert(level, 1, name, name, validity, key, ski, inr.clone(), locations(name, name, &ski, true));
        rc.signature = backend.sign(keys.sk(), &rc.tbs())?;
        let node = CaNode {
            name: name.to_owned(),
            level,
            inr,
            keys,
            parent: None,
            rc,
            validity,
            manifest: Manifest::new(name),
            next_serial: 2,
            backend,
        };
        Ok((node, IssueStats { sign_ops: 1, keygens: 0 }))
    }

    /// Rebuild a CA from its stored keys, certificate and manifest.
    pub fn restore(keys: CaKeys, rc: ResourceCert, manifest: Manifest, next_serial: u64) -> Result<CaNode, IssueError> {
        keys.check_level(rc.level)?;
        if keys.subject_key() != rc.key || manifest.issuer != rc.subject {
            return Err(IssueError::KeyMismatch(rc.subject));
        }
        Ok(CaNode {
            name: rc.subject.clone(),
            level: rc.level,
            inr: rc.inr.clone(),
            keys,
            parent: (!rc.is_self_signed()).then(|| rc.issuer.clone()),
            validity: rc.validity,
            rc,
            manifest,
            next_serial,
            backend: Arc::new(Software),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Serial the next issued object will get.
    pub fn next_serial(&self) -> u64 {
        self.next_serial
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn mode(&self) -> Mode {
        self.keys.mode()
    }

    pub fn inr(&self) -> &InrSet {
        &self.inr
    }

    pub fn keys(&self) -> &CaKeys {
        &self.keys
    }

    pub fn parent(&self) -> Option<&str> {
        self.parent.as_deref()
    }

    pub fn rc(&self) -> &ResourceCert {
        &self.rc
    }

    pub fn validity(&self) -> Validity {
        self.validity
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn backend(&self) -> &Arc<dyn SignerBackend> {
        &self.backend
    }

    fn take_serial(&mut self) -> u64 {
        let s = self.next_serial;
        self.next_serial += 1;
        s
    }

    /// Certify a child CA named `<self>||<label>`.
    pub fn issue_rc(
        &mut self,
        label: &str,
        keys: CaKeys,
        inr: InrSet,
        validity: Validity,
    ) -> Result<(CaNode, IssueStats), IssueError> {
        check_label(label)?;
        let name = format!("{}{ID_SEPARATOR}{label}", self.name);
        self.issue_rc_named(&name, keys, inr, validity)
    }

    /// Certify a child CA under an explicit name, which need not extend
    /// this CA's name.
    pub fn issue_rc_named(
        &mut self,
        name: &str,
        keys: CaKeys,
        inr: InrSet,
        validity: Validity,
    ) -> Result<(CaNode, IssueStats), IssueError> {
        validate_id(name).map_err(|_| IssueError::Label(name.to_owned()))?;
        name.split(ID_SEPARATOR).try_for_each(check_label)?;
        let name = name.to_owned();
        if keys.mode() != self.mode() {
            return Err(IssueError::ModeMismatch {
                parent: self.mode(),
                child: keys.mode(),
            });
        }
        keys.check_level(self.level)?;
        if !self.inr.contains(&inr) {
            return Err(IssueError::InrNotContained { subject: name });
        }
        let serial = self.take_serial();
        let mut rc = unsigned_cert(
            self.level,
            serial,
            &self.name,
            &name,
            validity,
            keys.subject_key(),
            self.rc.ski,
            inr.clone(),
            locations(&name, &self.name, &self.rc.ski, false),
        );
        rc.signature = self.backend.sign(self.keys.sk(), &rc.tbs())?;
        self.manifest.update(&repo::rc_path(&name), &rc.encode());
        let child = CaNode {
            name: name.clone(),
            level: self.level,
            inr,
            keys,
            parent: Some(self.name.clone()),
            rc,
            validity,
            manifest: Manifest::new(name),
            next_serial: 1,
            backend: self.backend.clone(),
        };
        Ok((child, IssueStats { sign_ops: 1, keygens: 0 }))
    }

    /// Authorize `inr`'s prefixes for its origin AS.
    pub fn issue_roa<R: RngCore + CryptoRng>(
        &mut self,
        inr: InrSet,
        signing_time: DateTime<Utc>,
        rng: &mut R,
    ) -> Result<(RoaObject, IssueStats), IssueError> {
        if !self.inr.contains(&inr) {
            return Err(IssueError::InrNotContained {
                subject: format!("ROA of {}", self.name),
            });
        }
        let serial = self.take_serial();
        let mut stats = IssueStats::default();
        let auth = match &self.keys {
            CaKeys::Ipkpq { id, r, .. } => {
                let auth = RoaAuth::Ipkpq { id: id.clone(), r: *r };
                (auth, None)
            }
            CaKeys::Standard { .. } => {
                let ee = CaKeys::generate_standard(self.level, self.backend.as_ref(), rng);
                stats.keygens += 1;
                let subject = format!("{}#ee{serial}", self.name);
                let mut loc = locations(&self.name, &self.name, &self.rc.ski, false);
                loc.ca_repository = repo::uri(&format!("{}/{}/", repo::ca_path(&self.name), repo::ROA_DIR));
                loc.issuer_cert = repo::uri(&repo::rc_path(&self.name));
                let mut cert = unsigned_cert(
                    self.level,
                    serial,
                    &self.name,
                    &subject,
                    self.validity,
                    ee.subject_key(),
                    self.rc.ski,
                    inr.clone(),
                    loc,
                );
                cert.signature = self.backend.sign(self.keys.sk(), &cert.tbs())?;
                stats.sign_ops += 1;
                (
                    RoaAuth::Standard {
                        ee_cert: Box::new(cert),
                    },
                    Some(ee),
                )
            }
        };
        let (auth, ee) = auth;
        let mut roa = RoaObject {
            level: self.level,
            serial,
            signer: self.name.clone(),
            auth,
            signing_time: signing_time.trunc_subsecs(0),
            inr,
            signature: Vec::new(),
        };
        let sk = ee.as_ref().map_or(self.keys.sk(), CaKeys::sk);
        roa.signature = self.backend.sign(sk, &roa.tbs())?;
        stats.sign_ops += 1;
        self.manifest.update(&format!("{}/{serial}.roa", repo::ROA_DIR), &roa.encode());
        Ok((roa, stats))
    }

    /// Write this CA's certificate and manifest.
    pub fn publish(&self, repo: &dyn Repository) -> Result<(), IssueError> {
        repo.put(&repo::rc_path(&self.name), &self.rc.encode())?;
        repo.put(&repo::manifest_path(&self.name), &self.manifest.encode())?;
        Ok(())
    }

    pub fn publish_roa(&self, repo: &dyn Repository, roa: &RoaObject) -> Result<(), IssueError> {
        repo.put(&repo::roa_path(&self.name, &roa.serial.to_string()), &roa.encode())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rpki::inr::{AsRange, IpPrefix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn validity() -> Validity {
        let t = DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc);
        Validity::new(t, t + chrono::Duration::days(365))
    }

    fn inr(p: &str, lo: u32, hi: u32) -> InrSet {
        InrSet::new(vec![p.parse::<IpPrefix>().unwrap()], vec![AsRange::new(lo, hi).unwrap()])
    }

    fn std_root(rng: &mut ChaCha20Rng) -> CaNode {
        let keys = CaKeys::generate_standard(Level::MlDsa44, &Software, rng);
        CaNode::root("APNIC", Level::MlDsa44, keys, InrSet::all(), validity()).unwrap().0
    }

    #[test]
    fn root_verifies_under_own_key() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let root = std_root(&mut rng);
        let rc = root.rc();
        assert!(rc.is_self_signed());
        assert_eq!(rc.inr, InrSet::all());
        assert!(ipkpq_mldsa::verify(rc.public_key().unwrap(), &rc.tbs(), b"", &rc.signature).unwrap());
    }

    #[test]
    fn containment_enforced() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut root = std_root(&mut rng);
        let keys = CaKeys::generate_standard(Level::MlDsa44, &Software, &mut rng);
        let (mut child, _) = root
            .issue_rc("CNNIC", keys.clone(), inr("10.0.0.0/8", 64496, 64511), validity())
            .unwrap();
        assert_eq!(child.name(), "APNIC||CNNIC");
        assert!(matches!(
            child.issue_rc("X", keys.clone(), inr("11.0.0.0/8", 64496, 64496), validity()),
            Err(IssueError::InrNotContained { .. })
        ));
        assert!(matches!(
            child.issue_roa(inr("10.0.0.0/8", 1, 1), validity().not_before, &mut rng),
            Err(IssueError::InrNotContained { .. })
        ));
        assert!(matches!(
            child.issue_rc("a||b", keys, inr("10.0.0.0/8", 64500, 64500), validity()),
            Err(IssueError::Label(_))
        ));
    }

    #[test]
    fn standard_roa_costs_two_signs_and_fresh_ee() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut root = std_root(&mut rng);
        let t = validity().not_before;
        let (a, sa) = root.issue_roa(inr("10.0.0.0/8", 64500, 64500), t, &mut rng).unwrap();
        let (b, _) = root.issue_roa(inr("10.0.0.0/8", 64500, 64500), t, &mut rng).unwrap();
        assert_eq!(sa, IssueStats { sign_ops: 2, keygens: 1 });
        let ee = |r: &RoaObject| match &r.auth {
            RoaAuth::Standard { ee_cert } => ee_cert.public_key().unwrap().to_vec(),
            RoaAuth::Ipkpq { .. } => unreachable!(),
        };
        assert_ne!(ee(&a), ee(&b));
        assert!(ipkpq_mldsa::verify(&ee(&a), &a.tbs(), b"", &a.signature).unwrap());
        assert!(root.manifest().check("roas/2.roa", &a.encode()));
        assert!(root.manifest().check("roas/3.roa", &b.encode()));
    }

    #[test]
    fn mode_mismatch_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut root = std_root(&mut rng);
        let kp = ipkpq_mldsa::keygen(Level::MlDsa44, &mut rng);
        let keys = CaKeys::Ipkpq {
            sk: kp.sk,
            pk: kp.pk,
            id: "X".into(),
            r: [0; 32],
        };
        assert!(matches!(
            root.issue_rc("X", keys, InrSet::default(), validity()),
            Err(IssueError::ModeMismatch { .. })
        ));
        let k65 = CaKeys::generate_standard(Level::MlDsa65, &Software, &mut rng);
        assert!(matches!(
            root.issue_rc("Y", k65, InrSet::default(), validity()),
            Err(IssueError::LevelMismatch { expected: 44 })
        ));
    }

    #[test]
    fn restore_continues_issuing() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let mut root = std_root(&mut rng);
        let keys = CaKeys::generate_standard(Level::MlDsa44, &Software, &mut rng);
        let (child, _) = root.issue_rc("ISP", keys.clone(), inr("10.0.0.0/8", 64500, 64500), validity()).unwrap();
        let mut back = CaNode::restore(keys, child.rc().clone(), child.manifest().clone(), child.next_serial()).unwrap();
        assert_eq!(back.parent(), Some("APNIC"));
        assert_eq!(back.name(), "APNIC||ISP");
        let t = validity().not_before;
        let (roa, _) = back.issue_roa(inr("10.0.0.0/8", 64500, 64500), t, &mut rng).unwrap();
        assert_eq!(roa.serial, 1);
        let other = CaKeys::generate_standard(Level::MlDsa44, &Software, &mut rng);
        assert!(matches!(
            CaNode::restore(other, child.rc().clone(), child.manifest().clone(), 1),
            Err(IssueError::KeyMismatch(_))
        ));
        let root_back = CaNode::restore(root.keys().clone(), root.rc().clone(), root.manifest().clone(), 3).unwrap();
        assert_eq!(root_back.parent(), None);
    }
}
