//! Relying-party validation of ROAs in both key modes.
//!
//! Standard mode walks the certificate chain from the ROA's EE certificate
//! up to a trust anchor pinned by digest, verifying every link. Identity
//! mode checks the signer's registration, resolves its key from
//! `(id, R)` and verifies the one ROA signature.

use std::collections::HashMap;
use std::sync::RwLock;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::center::{RegistrationFailure, RegistrationTable};
use crate::resolver::{Bottom, KeyResolver, Resolution, ResolveError};
use crate::rpki::objects::{digest, Mode, ResourceCert, RoaAuth, RoaObject};
use crate::rpki::repo::{self, Repository};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    BadSignature,
    ChainBroken,
    InrViolation,
    RegistrationInvalid,
    Expired,
    RhoMismatch,
    NotFound,
}

impl std::fmt::Display for Reason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "lowercase")]
pub enum Verdict {
    Valid,
    Invalid(Reason),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mode: Mode,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub sig_verifies: u64,
    pub objects_fetched: u64,
    pub bytes_fetched: u64,
    #[serde(with = "micros")]
    pub wall_time: Duration,
}

mod micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidateError {
    #[error("{got} ROA given to the {expected} validator")]
    Mode { expected: Mode, got: Mode },
    #[error("trust anchor does not match the pinned digest")]
    TrustAnchor,
    #[error("trust anchor: {0}")]
    TrustAnchorDecode(#[from] crate::rpki::TlvError),
    #[error("repository: {0}")]
    Repository(#[from] std::io::Error),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}

struct Counters {
    sig_verifies: u64,
    objects_fetched: u64,
    bytes_fetched: u64,
    start: Instant,
}

impl Counters {
    fn new() -> Self {
        Counters {
            sig_verifies: 0,
            objects_fetched: 0,
            bytes_fetched: 0,
            start: Instant::now(),
        }
    }

    fn verify(&mut self, pk: &[u8], msg: &[u8], sig: &[u8]) -> bool {
        self.sig_verifies += 1;
        ipkpq_mldsa::verify(pk, msg, b"", sig).unwrap_or(false)
    }

    fn report(self, mode: Mode, verdict: Verdict) -> ValidationReport {
        ValidationReport {
            mode,
            verdict,
            sig_verifies: self.sig_verifies,
            objects_fetched: self.objects_fetched,
            bytes_fetched: self.bytes_fetched,
            wall_time: self.start.elapsed(),
        }
    }
}

/// Chain validation against a pinned trust anchor. The anchor is held in
/// memory; intermediates are fetched per validation unless full-chain
/// caching is turned on.
pub struct StandardValidator<'a> {
    repo: &'a dyn Repository,
    anchor: ResourceCert,
    cache: Option<RwLock<HashMap<String, ResourceCert>>>,
}

impl std::fmt::Debug for StandardValidator<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StandardValidator")
            .field("anchor", &self.anchor.subject)
            .field("cache", &self.cache.is_some())
            .finish_non_exhaustive()
    }
}

impl<'a> StandardValidator<'a> {
    /// Accept `anchor_bytes` as the trust anchor if they hash to `pinned`
    /// and the certificate's self-signature verifies.
    pub fn new(repo: &'a dyn Repository, anchor_bytes: &[u8], pinned: &[u8; 32]) -> Result<Self, ValidateError> {
        if digest(anchor_bytes) != *pinned {
            return Err(ValidateError::TrustAnchor);
        }
        let anchor = ResourceCert::decode(anchor_bytes)?;
        let self_signed = anchor.is_self_signed()
            && anchor
                .public_key()
                .is_some_and(|pk| ipkpq_mldsa::verify(pk, &anchor.tbs(), b"", &anchor.signature).unwrap_or(false));
        if !self_signed {
            return Err(ValidateError::TrustAnchor);
        }
        Ok(StandardValidator {
            repo,
            anchor,
            cache: None,
        })
    }

    /// Keep every fetched intermediate for later validations.
    pub fn with_chain_cache(mut self) -> Self {
        self.cache = Some(RwLock::new(HashMap::new()));
        self
    }

    pub fn anchor(&self) -> &ResourceCert {
        &self.anchor
    }

    fn fetch(&self, uri: &str, c: &mut Counters) -> Result<Option<ResourceCert>, ValidateError> {
        if let Some(cache) = &self.cache {
            if let Some(rc) = cache.read().expect("lock").get(uri) {
                return Ok(Some(rc.clone()));
            }
        }
        let Some(path) = repo::path_of(uri) else {
            return Ok(None);
        };
        let Some(bytes) = self.repo.get(path)? else {
            return Ok(None);
        };
        c.objects_fetched += 1;
        c.bytes_fetched += bytes.len() as u64;
        let Ok(rc) = ResourceCert::decode(&bytes) else {
            return Ok(None);
        };
        if let Some(cache) = &self.cache {
            cache.write().expect("lock").insert(uri.to_owned(), rc.clone());
        }
        Ok(Some(rc))
    }

    pub fn validate(&self, roa: &RoaObject, now: DateTime<Utc>) -> Result<ValidationReport, ValidateError> {
        let mut c = Counters::new();
        let verdict = self.walk(roa, now, &mut c)?;
        Ok(c.report(Mode::Standard, verdict))
    }

    fn walk(&self, roa: &RoaObject, now: DateTime<Utc>, c: &mut Counters) -> Result<Verdict, ValidateError> {
        use Reason::*;
        let RoaAuth::Standard { ee_cert } = &roa.auth else {
            return Err(ValidateError::Mode {
                expected: Mode::Standard,
                got: roa.mode(),
            });
        };
        let ee = ee_cert.as_ref();
        let (Some(ee_pk), true) = (ee.public_key(), ee.level == roa.level) else {
            return Ok(Verdict::Invalid(ChainBroken));
        };
        if !c.verify(ee_pk, &roa.tbs(), &roa.signature) {
            return Ok(Verdict::Invalid(BadSignature));
        }
        if !ee.inr.contains(&roa.inr) {
            return Ok(Verdict::Invalid(InrViolation));
        }
        if !ee.validity.contains(now) {
            return Ok(Verdict::Invalid(Expired));
        }
        let mut child = ee.clone();
        // Bounded by the repository contents; a loop would revisit a name.
        let mut seen = std::collections::HashSet::new();
        loop {
            let issuer = if child.aki == self.anchor.ski && child.issuer == self.anchor.subject {
                self.anchor.clone()
            } else {
                if !seen.insert(child.locations.issuer_cert.clone()) {
                    return Ok(Verdict::Invalid(ChainBroken));
                }
                match self.fetch(&child.locations.issuer_cert, c)? {
                    Some(rc) => rc,
                    None => return Ok(Verdict::Invalid(ChainBroken)),
                }
            };
            let linked = issuer.subject == child.issuer && issuer.ski == child.aki && issuer.level == child.level;
            let Some(pk) = issuer.public_key().filter(|_| linked) else {
                return Ok(Verdict::Invalid(ChainBroken));
            };
            if !c.verify(pk, &child.tbs(), &child.signature) {
                return Ok(Verdict::Invalid(ChainBroken));
            }
            if !issuer.inr.contains(&child.inr) {
                return Ok(Verdict::Invalid(InrViolation));
            }
            if !issuer.validity.contains(now) {
                return Ok(Verdict::Invalid(Expired));
            }
            if issuer == self.anchor {
                return Ok(Verdict::Valid);
            }
            child = issuer;
        }
    }
}

/// Validate a standard-mode ROA against a trust anchor pinned by digest.
pub fn validate_standard(
    roa: &RoaObject,
    repo: &dyn Repository,
    anchor_bytes: &[u8],
    pinned: &[u8; 32],
    now: DateTime<Utc>,
) -> Result<ValidationReport, ValidateError> {
    StandardValidator::new(repo, anchor_bytes, pinned)?.validate(roa, now)
}

/// Validate an identity-mode ROA. Registration status and window are
/// checked before any cryptography; a record whose `R` differs from the
/// ROA's is reported only after resolution, so substituted values show up
/// as resolution failures.
pub fn validate_ipkpq(
    roa: &RoaObject,
    resolver: &dyn KeyResolver,
    table: &RegistrationTable,
    now: DateTime<Utc>,
) -> Result<ValidationReport, ValidateError> {
    use Reason::*;
    let RoaAuth::Ipkpq { id, r } = &roa.auth else {
        return Err(ValidateError::Mode {
            expected: Mode::Ipkpq,
            got: roa.mode(),
        });
    };
    let mut c = Counters::new();
    let done = |c: Counters, v| Ok(c.report(Mode::Ipkpq, v));
    let r_matches = match table.check(id, r, now) {
        Ok(_) => true,
        Err(RegistrationFailure::RMismatch) => false,
        Err(RegistrationFailure::Unknown | RegistrationFailure::Inactive) => {
            return done(c, Verdict::Invalid(RegistrationInvalid))
        }
        Err(RegistrationFailure::Expired) => return done(c, Verdict::Invalid(Expired)),
    };
    let lookup = resolver.lookup(id, r)?;
    c.objects_fetched += lookup.objects_fetched;
    c.bytes_fetched += lookup.bytes_fetched;
    let key = match lookup.resolution {
        Resolution::Key(k) => k,
        Resolution::Bottom(Bottom::NotFound) => return done(c, Verdict::Invalid(NotFound)),
        Resolution::Bottom(Bottom::RhoMismatch) => return done(c, Verdict::Invalid(RhoMismatch)),
    };
    if !r_matches {
        return done(c, Verdict::Invalid(RegistrationInvalid));
    }
    if ipkpq_mldsa::Level::from_pk_len(key.pk.len()) != Some(roa.level) {
        return done(c, Verdict::Invalid(BadSignature));
    }
    let ok = c.verify(&key.pk, &roa.tbs(), &roa.signature);
    done(c, if ok { Verdict::Valid } else { Verdict::Invalid(BadSignature) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::center::KeyCenter;
    use crate::resolver::FileResolver;
    use crate::rpki::repo::MemoryRepo;
    use crate::rpki::tree::{build_tree, Naming, Tree, TreeSpec};
    use crate::rpki::Validity;
    use crate::seed::Dimensions;
    use ipkpq_mldsa::Level;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    fn now() -> DateTime<Utc> {
        t0() + chrono::Duration::days(10)
    }

    fn spec(mode: Mode, depth: usize) -> TreeSpec {
        TreeSpec {
            mode,
            level: Level::MlDsa44,
            depth,
            fanout: 1,
            naming: Naming::Flat,
            validity: Validity::new(t0(), t0() + chrono::Duration::days(365)),
        }
    }

    fn standard(depth: usize) -> (Tree, MemoryRepo, RoaObject, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(depth as u64);
        let mut tree = build_tree(spec(Mode::Standard, depth), None, &mut rng).unwrap();
        let (roa, _) = tree.issue_roa(0, now(), &mut rng).unwrap();
        let repo = MemoryRepo::new();
        tree.publish(&repo).unwrap();
        (tree, repo, roa, rng)
    }

    fn ipkpq(depth: usize) -> (Tree, KeyCenter, RoaObject) {
        let mut rng = ChaCha20Rng::seed_from_u64(100 + depth as u64);
        let mut kc = KeyCenter::init(Level::MlDsa44, Dimensions::new(8, 8).unwrap(), &mut rng);
        let mut tree = build_tree(spec(Mode::Ipkpq, depth), Some(&mut kc), &mut rng).unwrap();
        let (roa, _) = tree.issue_roa(0, now(), &mut rng).unwrap();
        (tree, kc, roa)
    }

    fn run_standard(tree: &Tree, repo: &MemoryRepo, roa: &RoaObject) -> ValidationReport {
        let anchor = tree.root().rc().encode();
        validate_standard(roa, repo, &anchor, &digest(&anchor), now()).unwrap()
    }

    #[test]
    fn standard_depth_three() {
        let (tree, repo, roa, _) = standard(3);
        let rep = run_standard(&tree, &repo, &roa);
        assert_eq!(rep.verdict, Verdict::Valid);
        assert_eq!(rep.sig_verifies, 4);
        assert_eq!(rep.objects_fetched, 2);
        let expected: usize = tree.nodes[1..].iter().map(|n| n.rc().encode().len()).sum();
        assert_eq!(rep.bytes_fetched, expected as u64);
    }

    #[test]
    fn standard_counts_grow_with_depth() {
        let mut last = 0;
        for d in 3..=5 {
            let (tree, repo, roa, _) = standard(d);
            let rep = run_standard(&tree, &repo, &roa);
            assert_eq!(rep.sig_verifies, d as u64 + 1);
            assert!(rep.bytes_fetched > last);
            last = rep.bytes_fetched;
        }
    }

    #[test]
    fn standard_failures() {
        let (tree, repo, roa, _) = standard(3);
        // Tampered middle certificate.
        let mid = repo::rc_path(tree.nodes[1].name());
        let mut bytes = repo.get(&mid).unwrap().unwrap();
        let good = bytes.clone();
        let n = bytes.len();
        bytes[n / 2] ^= 1;
        repo.put(&mid, &bytes).unwrap();
        assert_eq!(run_standard(&tree, &repo, &roa).verdict, Verdict::Invalid(Reason::ChainBroken));
        repo.put(&mid, &good).unwrap();
        // Missing intermediate.
        let isp = repo::rc_path(tree.nodes[2].name());
        let isp_bytes = repo.get(&isp).unwrap().unwrap();
        repo.put(&isp, b"").unwrap();
        assert_eq!(run_standard(&tree, &repo, &roa).verdict, Verdict::Invalid(Reason::ChainBroken));
        repo.put(&isp, &isp_bytes).unwrap();
        // Tampered ROA.
        let mut bad = roa.clone();
        bad.signature[7] ^= 1;
        assert_eq!(run_standard(&tree, &repo, &bad).verdict, Verdict::Invalid(Reason::BadSignature));
        // Expired.
        let anchor = tree.root().rc().encode();
        let late = t0() + chrono::Duration::days(400);
        let rep = validate_standard(&roa, &repo, &anchor, &digest(&anchor), late).unwrap();
        assert_eq!(rep.verdict, Verdict::Invalid(Reason::Expired));
        // Wrong pin.
        assert!(matches!(
            validate_standard(&roa, &repo, &anchor, &[0; 32], now()),
            Err(ValidateError::TrustAnchor)
        ));
    }

    #[test]
    fn standard_inr_violation_in_chain() {
        use crate::rpki::{CaKeys, InrSet, Software};
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let mut tree = build_tree(spec(Mode::Standard, 2), None, &mut rng).unwrap();
        let ten = InrSet::new(vec!["10.0.0.0/8".parse().unwrap()], vec![]);
        let keys = CaKeys::generate_standard(Level::MlDsa44, &Software, &mut rng);
        let validity = tree.spec.validity;
        let (mut isp, _) = tree.nodes[1].issue_rc("ISP", keys, ten.clone(), validity).unwrap();
        let (roa, _) = isp.issue_roa(ten, now(), &mut rng).unwrap();
        let repo = MemoryRepo::new();
        tree.publish(&repo).unwrap();
        isp.publish(&repo).unwrap();
        let anchor = tree.root().rc().encode();
        let run = || validate_standard(&roa, &repo, &anchor, &digest(&anchor), now()).unwrap();
        assert_eq!(run().verdict, Verdict::Valid);
        // Re-issue the middle certificate with a narrower range, signed by
        // the root. The ISP below it now claims more than its issuer holds.
        let mut mid = tree.nodes[1].rc().clone();
        mid.inr = InrSet::new(vec!["10.0.0.0/9".parse().unwrap()], vec![]);
        mid.signature = ipkpq_mldsa::sign(tree.root().keys().sk(), &mid.tbs(), b"").unwrap();
        repo.put(&repo::rc_path(tree.nodes[1].name()), &mid.encode()).unwrap();
        assert_eq!(run().verdict, Verdict::Invalid(Reason::InrViolation));
    }

    #[test]
    fn chain_cache_stops_fetches() {
        let (tree, repo, roa, _) = standard(4);
        let anchor = tree.root().rc().encode();
        let v = StandardValidator::new(&repo, &anchor, &digest(&anchor)).unwrap().with_chain_cache();
        assert_eq!(v.validate(&roa, now()).unwrap().objects_fetched, 3);
        let warm = v.validate(&roa, now()).unwrap();
        assert_eq!((warm.objects_fetched, warm.sig_verifies), (0, 5));
        assert!(warm.verdict.is_valid());
    }

    #[test]
    fn ipkpq_single_verify_at_any_depth() {
        for d in 3..=5 {
            let (_, kc, roa) = ipkpq(d);
            let res = FileResolver::new(kc.file_pk().clone());
            let rep = validate_ipkpq(&roa, &res, kc.registrations(), now()).unwrap();
            assert_eq!(rep.verdict, Verdict::Valid);
            assert_eq!(rep.sig_verifies, 1);
            assert_eq!(rep.objects_fetched, 1);
            assert_eq!(rep.bytes_fetched, (2 + 8 + 1312) as u64);
        }
    }

    #[test]
    fn ipkpq_failures() {
        let (tree, mut kc, roa) = ipkpq(3);
        let res = FileResolver::new(kc.file_pk().clone());
        let check = |roa: &RoaObject, kc: &KeyCenter, at| validate_ipkpq(roa, &res, kc.registrations(), at).unwrap().verdict;
        let RoaAuth::Ipkpq { id, r } = roa.auth.clone() else { unreachable!() };

        let mut sub = roa.clone();
        sub.auth = RoaAuth::Ipkpq { id: id.clone(), r: [r[0] ^ 1; 32] };
        assert_eq!(check(&sub, &kc, now()), Verdict::Invalid(Reason::RhoMismatch));

        let mut bad = roa.clone();
        bad.signature[0] ^= 1;
        assert_eq!(check(&bad, &kc, now()), Verdict::Invalid(Reason::BadSignature));

        assert_eq!(check(&roa, &kc, t0() + chrono::Duration::days(400)), Verdict::Invalid(Reason::Expired));

        let mut other = roa.clone();
        other.auth = RoaAuth::Ipkpq { id: "CA999999".into(), r };
        assert_eq!(check(&other, &kc, now()), Verdict::Invalid(Reason::RegistrationInvalid));

        // Signer registered but its key missing from the directory.
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        kc.register("X", "CA777777", t0(), t0() + chrono::Duration::days(30), &mut rng).unwrap();
        let ghost_rec = {
            let mut rec = kc.registrations().get("CA777777").unwrap().clone();
            rec.status = crate::center::Status::Active;
            rec.r = Some([5; 32]);
            rec
        };
        let mut table = kc.registrations().clone();
        table.push(ghost_rec);
        let mut ghost = roa.clone();
        ghost.auth = RoaAuth::Ipkpq { id: "CA777777".into(), r: [5; 32] };
        assert_eq!(
            validate_ipkpq(&ghost, &res, &table, now()).unwrap().verdict,
            Verdict::Invalid(Reason::NotFound)
        );

        kc.revoke(&id).unwrap();
        assert_eq!(check(&roa, &kc, now()), Verdict::Invalid(Reason::RegistrationInvalid));
        let _ = tree;
    }

    #[test]
    fn forgery_rejected_in_both_modes() {
        let (tree, repo, sroa, _) = standard(3);
        let (_, kc, iroa) = ipkpq(3);
        let res = FileResolver::new(kc.file_pk().clone());
        // Swap signatures between objects of the same level.
        let mut a = sroa.clone();
        a.signature = iroa.signature.clone();
        let mut b = iroa.clone();
        b.signature = sroa.signature.clone();
        assert_eq!(run_standard(&tree, &repo, &a).verdict, Verdict::Invalid(Reason::BadSignature));
        assert_eq!(
            validate_ipkpq(&b, &res, kc.registrations(), now()).unwrap().verdict,
            Verdict::Invalid(Reason::BadSignature)
        );
        assert!(matches!(
            validate_ipkpq(&sroa, &res, kc.registrations(), now()),
            Err(ValidateError::Mode { .. })
        ));
    }

    #[test]
    fn report_json_shape() {
        let (tree, repo, roa, _) = standard(3);
        let rep = run_standard(&tree, &repo, &roa);
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["verdict"], "valid");
        assert_eq!(v["mode"], "standard");
        assert_eq!(v["sig_verifies"], 4);
        let bad = ValidationReport {
            verdict: Verdict::Invalid(Reason::RhoMismatch),
            ..rep
        };
        let v = serde_json::to_value(&bad).unwrap();
        assert_eq!(v["verdict"], "invalid");
        assert_eq!(v["reason"], "rho-mismatch");
        let back: ValidationReport = serde_json::from_value(v).unwrap();
        assert_eq!(back.verdict, bad.verdict);
        assert_eq!(Reason::ChainBroken.to_string(), "chain-broken");
    }
}
