//! ML-DSA (FIPS 204) signatures.
//!
//! Besides the usual seed-based key generation, this crate exposes
//! [`keygen_from_components`], which accepts the three seeds `rho`, `rho'`
//! and `K` directly instead of deriving them from a single 32-byte `xi`.
//! Identity-based key management needs that entry point: the public seed
//! and the private seed come from different parties.
//!
//! Signing is deterministic by default ([`sign`]); [`sign_hedged`] mixes in
//! fresh randomness. Only the pure (non pre-hash) variant is provided.

mod dsa;
mod encode;
mod params;
mod poly;
mod rounding;
mod sample;

use rand_core::{CryptoRng, RngCore};

pub use params::Level;

/// Errors from malformed inputs. A signature that fails to verify is not
/// an error; [`verify`] returns `Ok(false)` for it.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("{what}: expected {expected} bytes, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("secret key length {0} does not match any ML-DSA parameter set")]
    MalformedSecretKey(usize),
    #[error("public key length {0} does not match any ML-DSA parameter set")]
    MalformedPublicKey(usize),
    #[error("context string is {0} bytes, at most 255 allowed")]
    ContextTooLong(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

/// An encoded key pair.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub sk: Vec<u8>,
    pub pk: Vec<u8>,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("sk", &format_args!("<{} bytes>", self.sk.len()))
            .field("pk_prefix", &format_args!("{:02x?}", &self.pk[..8]))
            .finish()
    }
}

/// The public by-products of key generation from components.
///
/// `t1` is the packed high half of `t = A*s1 + s2`; `pk = rho || t1`.
#[derive(Clone)]
pub struct KeyComponents {
    pub level: Level,
    pub rho: [u8; 32],
    pub t1: Vec<u8>,
    /// H(pk, 64).
    pub tr: [u8; 64],
    pub keypair: KeyPair,
}

fn exact<const L: usize>(what: &'static str, bytes: &[u8]) -> Result<[u8; L]> {
    bytes.try_into().map_err(|_| Error::Length {
        what,
        expected: L,
        got: bytes.len(),
    })
}

/// Expand `(rho, rho', K)` into the full key material.
pub fn expand_components(
    level: Level,
    rho: &[u8],
    rho_prime: &[u8],
    key: &[u8],
) -> Result<KeyComponents> {
    let rho: [u8; 32] = exact("rho", rho)?;
    let rho_prime: [u8; 64] = exact("rho'", rho_prime)?;
    let key: [u8; 32] = exact("K", key)?;
    let e = dsa::keygen_internal(level, &rho, &rho_prime, &key);
    Ok(KeyComponents {
        level,
        rho,
        t1: e.t1_packed,
        tr: e.tr,
        keypair: KeyPair { sk: e.sk, pk: e.pk },
    })
}

/// Key generation with externally supplied seed components.
///
/// Identical inputs yield identical `(sk, pk)` everywhere.
pub fn keygen_from_components(
    level: Level,
    rho: &[u8],
    rho_prime: &[u8],
    key: &[u8],
) -> Result<KeyPair> {
    expand_components(level, rho, rho_prime, key).map(|c| c.keypair)
}

/// The FIPS 204 seed expansion `H(xi || k || l, 128)` split into `(rho, rho', K)`.
pub fn expand_seed(level: Level, xi: &[u8; 32]) -> ([u8; 32], [u8; 64], [u8; 32]) {
    let mut out = [0u8; 128];
    sample::h(&[xi, &[level.k() as u8, level.l() as u8]], &mut out);
    let mut rho = [0u8; 32];
    let mut rho_prime = [0u8; 64];
    let mut key = [0u8; 32];
    rho.copy_from_slice(&out[..32]);
    rho_prime.copy_from_slice(&out[32..96]);
    key.copy_from_slice(&out[96..]);
    (rho, rho_prime, key)
}

/// Standard ML-DSA.KeyGen_internal from a 32-byte seed.
pub fn keygen_from_seed(level: Level, xi: &[u8; 32]) -> KeyPair {
    let (rho, rho_prime, key) = expand_seed(level, xi);
    dsa::keygen_internal(level, &rho, &rho_prime, &key).into_keypair()
}

pub fn keygen<R: RngCore + CryptoRng>(level: Level, rng: &mut R) -> KeyPair {
    let mut xi = [0u8; 32];
    rng.fill_bytes(&mut xi);
    keygen_from_seed(level, &xi)
}

impl dsa::Expanded {
    fn into_keypair(self) -> KeyPair {
        KeyPair {
            sk: self.sk,
            pk: self.pk,
        }
    }
}

/// Assemble `pkEncode(rho, t1)` from a packed t1.
pub fn pk_encode(level: Level, rho: &[u8; 32], t1: &[u8]) -> Result<Vec<u8>> {
    if t1.len() != level.t1_len() {
        return Err(Error::Length {
            what: "t1",
            expected: level.t1_len(),
            got: t1.len(),
        });
    }
    Ok(encode::pk_encode(rho, t1))
}

/// The `rho` field of an encoded public key.
pub fn decode_rho(pk: &[u8]) -> Result<[u8; 32]> {
    Level::from_pk_len(pk.len()).ok_or(Error::MalformedPublicKey(pk.len()))?;
    let mut rho = [0u8; 32];
    rho.copy_from_slice(&pk[..32]);
    Ok(rho)
}

fn format_message(msg: &[u8], ctx: &[u8]) -> Result<Vec<u8>> {
    if ctx.len() > 255 {
        return Err(Error::ContextTooLong(ctx.len()));
    }
    let mut m = Vec::with_capacity(2 + ctx.len() + msg.len());
    m.push(0);
    m.push(ctx.len() as u8);
    m.extend_from_slice(ctx);
    m.extend_from_slice(msg);
    Ok(m)
}

/// ML-DSA.Sign_internal over a preformatted message with explicit `rnd`.
pub fn sign_internal(sk: &[u8], m_prime: &[u8], rnd: &[u8; 32]) -> Result<Vec<u8>> {
    let level = Level::from_sk_len(sk.len()).ok_or(Error::MalformedSecretKey(sk.len()))?;
    Ok(dsa::sign_internal(level, sk, m_prime, rnd))
}

/// Deterministic ML-DSA.Sign (pure variant, `rnd = 0^32`).
pub fn sign(sk: &[u8], msg: &[u8], ctx: &[u8]) -> Result<Vec<u8>> {
    sign_internal(sk, &format_message(msg, ctx)?, &[0u8; 32])
}

/// Hedged ML-DSA.Sign with fresh randomness.
pub fn sign_hedged<R: RngCore + CryptoRng>(
    sk: &[u8],
    msg: &[u8],
    ctx: &[u8],
    rng: &mut R,
) -> Result<Vec<u8>> {
    let mut rnd = [0u8; 32];
    rng.fill_bytes(&mut rnd);
    sign_internal(sk, &format_message(msg, ctx)?, &rnd)
}

/// ML-DSA.Verify_internal. A signature of the wrong length is `Ok(false)`.
pub fn verify_internal(pk: &[u8], m_prime: &[u8], sig: &[u8]) -> Result<bool> {
    let level = Level::from_pk_len(pk.len()).ok_or(Error::MalformedPublicKey(pk.len()))?;
    if sig.len() != level.sig_len() {
        return Ok(false);
    }
    Ok(dsa::verify_internal(level, pk, m_prime, sig))
}

/// ML-DSA.Verify (pure variant).
pub fn verify(pk: &[u8], msg: &[u8], ctx: &[u8], sig: &[u8]) -> Result<bool> {
    Level::from_pk_len(pk.len()).ok_or(Error::MalformedPublicKey(pk.len()))?;
    if ctx.len() > 255 {
        return Ok(false);
    }
    verify_internal(pk, &format_message(msg, ctx)?, sig)
}
