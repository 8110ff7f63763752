//! Differential checks against the independent `fips204` implementation.

use fips204::traits::{KeyGen, SerDes, Signer, Verifier};
use ipkpq_mldsa::{expand_seed, keygen_from_components, sign, verify, Level};
use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn oracle_keygen(level: Level, xi: &[u8; 32]) -> (Vec<u8>, Vec<u8>) {
    match level {
        Level::MlDsa44 => {
            let (pk, sk) = fips204::ml_dsa_44::KG::keygen_from_seed(xi);
            (sk.into_bytes().to_vec(), pk.into_bytes().to_vec())
        }
        Level::MlDsa65 => {
            let (pk, sk) = fips204::ml_dsa_65::KG::keygen_from_seed(xi);
            (sk.into_bytes().to_vec(), pk.into_bytes().to_vec())
        }
        Level::MlDsa87 => {
            let (pk, sk) = fips204::ml_dsa_87::KG::keygen_from_seed(xi);
            (sk.into_bytes().to_vec(), pk.into_bytes().to_vec())
        }
    }
}

fn oracle_verify(pk: &[u8], msg: &[u8], ctx: &[u8], sig: &[u8]) -> bool {
    match Level::from_pk_len(pk.len()).unwrap() {
        Level::MlDsa44 => {
            let pk = fips204::ml_dsa_44::PublicKey::try_from_bytes(pk.try_into().unwrap()).unwrap();
            pk.verify(msg, sig.try_into().unwrap(), ctx)
        }
        Level::MlDsa65 => {
            let pk = fips204::ml_dsa_65::PublicKey::try_from_bytes(pk.try_into().unwrap()).unwrap();
            pk.verify(msg, sig.try_into().unwrap(), ctx)
        }
        Level::MlDsa87 => {
            let pk = fips204::ml_dsa_87::PublicKey::try_from_bytes(pk.try_into().unwrap()).unwrap();
            pk.verify(msg, sig.try_into().unwrap(), ctx)
        }
    }
}

/// Deterministic signature from the oracle (rnd = 0^32).
fn oracle_sign(sk: &[u8], msg: &[u8], ctx: &[u8]) -> Vec<u8> {
    match Level::from_sk_len(sk.len()).unwrap() {
        Level::MlDsa44 => {
            let sk = fips204::ml_dsa_44::PrivateKey::try_from_bytes(sk.try_into().unwrap()).unwrap();
            sk.try_sign_with_seed(&[0u8; 32], msg, ctx).unwrap().to_vec()
        }
        Level::MlDsa65 => {
            let sk = fips204::ml_dsa_65::PrivateKey::try_from_bytes(sk.try_into().unwrap()).unwrap();
            sk.try_sign_with_seed(&[0u8; 32], msg, ctx).unwrap().to_vec()
        }
        Level::MlDsa87 => {
            let sk = fips204::ml_dsa_87::PrivateKey::try_from_bytes(sk.try_into().unwrap()).unwrap();
            sk.try_sign_with_seed(&[0u8; 32], msg, ctx).unwrap().to_vec()
        }
    }
}

#[test]
fn components_reproduce_oracle_keypairs() {
    let mut rng = ChaCha20Rng::seed_from_u64(204);
    for level in Level::ALL {
        for _ in 0..10 {
            let mut xi = [0u8; 32];
            rng.fill_bytes(&mut xi);
            let (rho, rho_prime, key) = expand_seed(level, &xi);
            let kp = keygen_from_components(level, &rho, &rho_prime, &key).unwrap();
            let (sk, pk) = oracle_keygen(level, &xi);
            assert_eq!(kp.pk, pk);
            assert_eq!(kp.sk, sk);
        }
    }
}

#[test]
fn signatures_match_oracle_and_cross_verify() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for level in Level::ALL {
        for i in 0..5 {
            let mut rho = [0u8; 32];
            let mut rho_prime = [0u8; 64];
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut rho);
            rng.fill_bytes(&mut rho_prime);
            rng.fill_bytes(&mut key);
            let kp = keygen_from_components(level, &rho, &rho_prime, &key).unwrap();
            let msg = format!("route origin {i}");
            let sig = sign(&kp.sk, msg.as_bytes(), b"").unwrap();
            assert_eq!(sig, oracle_sign(&kp.sk, msg.as_bytes(), b""));
            assert!(oracle_verify(&kp.pk, msg.as_bytes(), b"", &sig));
            assert!(verify(&kp.pk, msg.as_bytes(), b"", &sig).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_components_round_trip_l44(
        rho in any::<[u8; 32]>(),
        rp_lo in any::<[u8; 32]>(),
        rp_hi in any::<[u8; 32]>(),
        key in any::<[u8; 32]>(),
        msg in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        round_trip(Level::MlDsa44, rho, rp_lo, rp_hi, key, &msg)?;
    }

    #[test]
    fn random_components_round_trip_l65(
        rho in any::<[u8; 32]>(),
        rp_lo in any::<[u8; 32]>(),
        rp_hi in any::<[u8; 32]>(),
        key in any::<[u8; 32]>(),
        msg in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        round_trip(Level::MlDsa65, rho, rp_lo, rp_hi, key, &msg)?;
    }

    #[test]
    fn random_components_round_trip_l87(
        rho in any::<[u8; 32]>(),
        rp_lo in any::<[u8; 32]>(),
        rp_hi in any::<[u8; 32]>(),
        key in any::<[u8; 32]>(),
        msg in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        round_trip(Level::MlDsa87, rho, rp_lo, rp_hi, key, &msg)?;
    }
}

fn round_trip(
    level: Level,
    rho: [u8; 32],
    rp_lo: [u8; 32],
    rp_hi: [u8; 32],
    key: [u8; 32],
    msg: &[u8],
) -> Result<(), TestCaseError> {
    let mut rho_prime = [0u8; 64];
    rho_prime[..32].copy_from_slice(&rp_lo);
    rho_prime[32..].copy_from_slice(&rp_hi);
    let kp = keygen_from_components(level, &rho, &rho_prime, &key).unwrap();
    prop_assert_eq!(kp.pk.len(), level.pk_len());
    prop_assert_eq!(kp.sk.len(), level.sk_len());
    prop_assert_eq!(ipkpq_mldsa::decode_rho(&kp.pk).unwrap(), rho);
    let sig = sign(&kp.sk, msg, b"").unwrap();
    prop_assert_eq!(sig.len(), level.sig_len());
    prop_assert!(verify(&kp.pk, msg, b"", &sig).unwrap());
    let mut bad = sig.clone();
    bad[sig.len() / 2] ^= 1;
    prop_assert!(!verify(&kp.pk, msg, b"", &bad).unwrap());
    Ok(())
}
