//! A persistent key center and an identity-mode CA hierarchy through
//! registration, issuance, online validation, renewal and revocation.

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use ipkpq_core::center::{KeyCenter, Status};
use ipkpq_core::mldsa::Level;
use ipkpq_core::protocol::run_keygen;
use ipkpq_core::resolver::{FileResolver, OnlineResolver, QueryServer, Tcp};
use ipkpq_core::rpki::{AsRange, CaKeys, CaNode, InrSet, Validity};
use ipkpq_core::seed::Dimensions;
use ipkpq_core::validator::{validate_ipkpq, Reason, Verdict};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const PASS: &[u8] = b"correct horse";

fn t0() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2025-03-01T00:00:00Z")
        .unwrap()
        .with_timezone(&Utc)
}

fn keys(kc: &mut KeyCenter, id: &str, days: i64, rng: &mut ChaCha20Rng) -> CaKeys {
    kc.register("org", id, t0(), t0() + Duration::days(days), rng).unwrap();
    CaKeys::from_protocol(id, run_keygen(kc, id, rng).unwrap())
}

fn prefix(p: &str, asn: u32) -> InrSet {
    InrSet::new(vec![p.parse().unwrap()], vec![AsRange::single(asn)])
}

#[test]
fn register_issue_validate_renew_revoke() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2025);
    let mut kc = KeyCenter::init_at(dir.path(), Level::MlDsa65, Dimensions::new(16, 16).unwrap(), PASS, &mut rng).unwrap();
    assert!(KeyCenter::init_at(dir.path(), Level::MlDsa65, Dimensions::new(16, 16).unwrap(), PASS, &mut rng).is_err());

    let validity = Validity::new(t0(), t0() + Duration::days(365));
    let root_keys = keys(&mut kc, "APNIC", 365, &mut rng);
    let (mut root, _) = CaNode::root("APNIC", Level::MlDsa65, root_keys, InrSet::all(), validity).unwrap();
    let nic_keys = keys(&mut kc, "APNIC||CNNIC", 365, &mut rng);
    let (mut nic, _) = root
        .issue_rc("CNNIC", nic_keys, InrSet::new(vec!["10.0.0.0/8".parse().unwrap()], vec![AsRange::new(64496, 64511).unwrap()]), validity)
        .unwrap();
    let isp_keys = keys(&mut kc, "APNIC||CNNIC||ISP1", 30, &mut rng);
    let (mut isp, _) = nic.issue_rc("ISP1", isp_keys, prefix("10.1.0.0/16", 64500), validity).unwrap();
    let now = t0() + Duration::days(1);
    let (roa, stats) = isp.issue_roa(prefix("10.1.0.0/16", 64500), now, &mut rng).unwrap();
    assert_eq!(stats.sign_ops, 1);

    // Persist, reopen and serve File_PK over TCP.
    kc.save(dir.path(), PASS, &mut rng).unwrap();
    assert!(KeyCenter::open(dir.path(), b"wrong").is_err());
    let mut kc = KeyCenter::open(dir.path(), PASS).unwrap();
    assert_eq!(kc.file_pk().record_count(), 3);
    let server = Arc::new(QueryServer::new(kc.file_pk().clone()));
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    server.clone().spawn_tcp(listener);
    let online = OnlineResolver::new(Tcp::connect(addr).unwrap());

    let cold = validate_ipkpq(&roa, &online, kc.registrations(), now).unwrap();
    let warm = validate_ipkpq(&roa, &online, kc.registrations(), now).unwrap();
    assert_eq!(cold.verdict, Verdict::Valid);
    assert_eq!(warm.verdict, Verdict::Valid);
    assert_eq!((cold.objects_fetched, warm.objects_fetched), (2, 1));
    let id_len = "APNIC||CNNIC||ISP1".len() as u64;
    let record = 2 + id_len + Level::MlDsa65.pk_len() as u64;
    assert_eq!(warm.bytes_fetched, record + 8);
    assert!(cold.bytes_fetched > warm.bytes_fetched + 16 * 16 * 32);

    // The ISP's registration runs out after 30 days.
    let later = t0() + Duration::days(40);
    assert_eq!(
        validate_ipkpq(&roa, &online, kc.registrations(), later).unwrap().verdict,
        Verdict::Invalid(Reason::Expired)
    );

    // Renewal issues a new R and key; the old ROA no longer resolves.
    kc.renew("APNIC||CNNIC||ISP1", t0() + Duration::days(90), &mut rng).unwrap();
    let new_key = run_keygen(&mut kc, "APNIC||CNNIC||ISP1", &mut rng).unwrap();
    server.publish(kc.file_pk().clone());
    let fresh = OnlineResolver::new(Tcp::connect(addr).unwrap());
    assert_eq!(
        validate_ipkpq(&roa, &fresh, kc.registrations(), later).unwrap().verdict,
        Verdict::Invalid(Reason::RhoMismatch)
    );
    let (mut renewed_isp, _) = nic
        .issue_rc("ISP1", CaKeys::from_protocol("APNIC||CNNIC||ISP1", new_key), prefix("10.1.0.0/16", 64500), validity)
        .unwrap();
    let (roa2, _) = renewed_isp.issue_roa(prefix("10.1.0.0/16", 64500), later, &mut rng).unwrap();
    assert_eq!(
        validate_ipkpq(&roa2, &fresh, kc.registrations(), later).unwrap().verdict,
        Verdict::Valid
    );

    // Revocation is immediate and independent of the key material.
    let rec = kc.revoke("APNIC||CNNIC||ISP1").unwrap();
    assert_eq!(rec.status, Status::Revoked);
    let local = FileResolver::new(kc.file_pk().clone());
    assert_eq!(
        validate_ipkpq(&roa2, &local, kc.registrations(), later).unwrap().verdict,
        Verdict::Invalid(Reason::RegistrationInvalid)
    );

    // History survives a save/open cycle.
    kc.save(dir.path(), PASS, &mut rng).unwrap();
    let reopened = KeyCenter::open(dir.path(), PASS).unwrap();
    assert_eq!(reopened.registrations().history().len(), kc.registrations().history().len());
    assert_eq!(reopened.registrations().get("APNIC||CNNIC||ISP1").unwrap().status, Status::Revoked);
}
