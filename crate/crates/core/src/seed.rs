//! Seed matrices and the identity-to-seed mapping.
//!
//! A key center holds two `m x h` grids of random seeds: a private one with
//! 64-byte entries and a public one with 32-byte entries. An identity
//! `(id, R)` is hashed with SHAKE256, the digest is cut into `h` equal
//! big-endian segments, and segment `i` selects row `segment mod m` of
//! column `i`. The selected entries are combined with [`seed_sum`].
//!
//! Seed addition is byte-wise addition modulo 256 with no carry between
//! bytes, so it is commutative, associative and has the all-zero string as
//! identity.

use rand_core::{CryptoRng, RngCore};
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;

pub type Seed32 = [u8; 32];
pub type Seed64 = [u8; 64];

/// Longest identity string accepted, in bytes.
pub const MAX_ID_LEN: usize = 1024;

/// Separator between the components of a hierarchical identity.
pub const ID_SEPARATOR: &str = "||";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SeedError {
    #[error("seed operands differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("seed sum over an empty sequence")]
    Empty,
    #[error("invalid matrix dimensions m={m}, h={h}: {reason}")]
    Dimensions {
        m: usize,
        h: usize,
        reason: &'static str,
    },
    #[error("matrix has {got} entries, dimensions require {expected}")]
    EntryCount { expected: usize, got: usize },
    #[error("invalid identity: {0}")]
    Identity(&'static str),
}

/// Byte-wise sum modulo 256 of equal-length seeds.
pub fn seed_sum<S: AsRef<[u8]>>(seeds: &[S]) -> Result<Vec<u8>, SeedError> {
    let first = seeds.first().ok_or(SeedError::Empty)?.as_ref();
    let mut acc = first.to_vec();
    for s in &seeds[1..] {
        let s = s.as_ref();
        if s.len() != acc.len() {
            return Err(SeedError::LengthMismatch(acc.len(), s.len()));
        }
        for (a, b) in acc.iter_mut().zip(s) {
            *a = a.wrapping_add(*b);
        }
    }
    Ok(acc)
}

/// Fixed-length seed addition.
pub fn add<const N: usize>(a: &[u8; N], b: &[u8; N]) -> [u8; N] {
    let mut out = *a;
    for (o, b) in out.iter_mut().zip(b) {
        *o = o.wrapping_add(*b);
    }
    out
}

/// Additive inverse: `add(x, neg(x))` is all zeros.
pub fn neg<const N: usize>(a: &[u8; N]) -> [u8; N] {
    let mut out = *a;
    for o in out.iter_mut() {
        *o = o.wrapping_neg();
    }
    out
}

/// Validated `(m, h)` pair.
///
/// `h` must divide 256 and `m` must not exceed `2^(256/h)`, so every row is
/// reachable from a segment. Strict dimensions also require `m, h >= 2`;
/// [`Dimensions::relaxed`] admits the degenerate value 1 for tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dimensions {
    m: usize,
    h: usize,
}

impl Dimensions {
    pub fn new(m: usize, h: usize) -> Result<Self, SeedError> {
        if m < 2 || h < 2 {
            return Err(SeedError::Dimensions {
                m,
                h,
                reason: "m and h must both be at least 2",
            });
        }
        Self::relaxed(m, h)
    }

    pub fn relaxed(m: usize, h: usize) -> Result<Self, SeedError> {
        let err = |reason| Err(SeedError::Dimensions { m, h, reason });
        if m == 0 || h == 0 {
            return err("dimensions must be positive");
        }
        if 256 % h != 0 {
            return err("h must divide 256");
        }
        let bits = 256 / h;
        if bits < usize::BITS as usize && m > (1usize << bits) {
            return err("m exceeds 2^(256/h)");
        }
        Ok(Dimensions { m, h })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn entries(&self) -> usize {
        self.m * self.h
    }

    /// Width in bits of one digest segment.
    pub fn segment_bits(&self) -> usize {
        256 / self.h
    }
}

/// Row-major `m x h` grid of `N`-byte seeds.
#[derive(Clone, PartialEq, Eq)]
pub struct SeedMatrix<const N: usize> {
    dims: Dimensions,
    entries: Vec<[u8; N]>,
}

pub type PrivMatrix = SeedMatrix<64>;
pub type PubMatrix = SeedMatrix<32>;

impl<const N: usize> SeedMatrix<N> {
    pub fn from_entries(dims: Dimensions, entries: Vec<[u8; N]>) -> Result<Self, SeedError> {
        if entries.len() != dims.entries() {
            return Err(SeedError::EntryCount {
                expected: dims.entries(),
                got: entries.len(),
            });
        }
        Ok(SeedMatrix { dims, entries })
    }

    pub fn random<R: RngCore + CryptoRng>(dims: Dimensions, rng: &mut R) -> Self {
        let entries = (0..dims.entries())
            .map(|_| {
                let mut e = [0u8; N];
                rng.fill_bytes(&mut e);
                e
            })
            .collect();
        SeedMatrix { dims, entries }
    }

    pub fn zeros(dims: Dimensions) -> Self {
        SeedMatrix {
            dims,
            entries: vec![[0u8; N]; dims.entries()],
        }
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    pub fn get(&self, row: usize, col: usize) -> &[u8; N] {
        &self.entries[row * self.dims.h + col]
    }

    pub fn entries(&self) -> &[[u8; N]] {
        &self.entries
    }

    /// Concatenated entries, row 0 column 0 first.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.entries.concat()
    }

    pub fn from_bytes(dims: Dimensions, bytes: &[u8]) -> Result<Self, SeedError> {
        if bytes.len() != dims.entries() * N {
            return Err(SeedError::EntryCount {
                expected: dims.entries(),
                got: bytes.len() / N,
            });
        }
        let entries = bytes
            .chunks_exact(N)
            .map(|c| c.try_into().expect("chunk length"))
            .collect();
        Ok(SeedMatrix { dims, entries })
    }

    /// Sum of the entries selected by `rows`, one per column.
    pub fn select_sum(&self, rows: &IndexVector) -> [u8; N] {
        rows.0
            .iter()
            .enumerate()
            .fold([0u8; N], |acc, (col, &row)| add(&acc, self.get(row, col)))
    }
}

impl<const N: usize> std::fmt::Debug for SeedMatrix<N> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SeedMatrix<{N}>({}x{}, contents elided)",
            self.dims.m, self.dims.h
        )
    }
}

/// Generate an independent private/public matrix pair.
pub fn gen_matrices<R: RngCore + CryptoRng>(
    dims: Dimensions,
    rng: &mut R,
) -> (PrivMatrix, PubMatrix) {
    let private = SeedMatrix::random(dims, rng);
    let public = SeedMatrix::random(dims, rng);
    (private, public)
}

/// A CA identity string together with its accompanying public key `R`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IdentityHandle {
    id: String,
    r: Seed32,
}

impl IdentityHandle {
    pub fn new(id: impl Into<String>, r: Seed32) -> Result<Self, SeedError> {
        let id = id.into();
        validate_id(&id)?;
        Ok(IdentityHandle { id, r })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn r(&self) -> &Seed32 {
        &self.r
    }

    /// SHAKE256(R || id) truncated to 32 bytes.
    pub fn digest(&self) -> [u8; 32] {
        let mut x = Shake256::default();
        x.update(&self.r);
        x.update(self.id.as_bytes());
        let mut out = [0u8; 32];
        x.finalize_xof().read(&mut out);
        out
    }
}

/// Check the identity string rules: nonempty, bounded, no empty components.
pub fn validate_id(id: &str) -> Result<(), SeedError> {
    if id.is_empty() {
        return Err(SeedError::Identity("identity is empty"));
    }
    if id.len() > MAX_ID_LEN {
        return Err(SeedError::Identity("identity longer than 1024 bytes"));
    }
    if id.split(ID_SEPARATOR).any(str::is_empty) {
        return Err(SeedError::Identity("identity has an empty component"));
    }
    Ok(())
}

/// One selected row per column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexVector(Vec<usize>);

impl IndexVector {
    pub fn rows(&self) -> &[usize] {
        &self.0
    }
}

/// Map an identity to one row index per column.
pub fn map_indices(handle: &IdentityHandle, dims: Dimensions) -> IndexVector {
    let digest = handle.digest();
    let width = dims.segment_bits();
    let m = dims.m() as u128;
    let rows = (0..dims.h())
        .map(|seg| {
            // Horner's rule over the segment's bits keeps the value reduced,
            // so segments wider than any machine word need no bignum.
            let mut acc = 0u128;
            for bit in seg * width..(seg + 1) * width {
                let b = (digest[bit / 8] >> (7 - bit % 8)) & 1;
                acc = (acc * 2 + u128::from(b)) % m;
            }
            acc as usize
        })
        .collect();
    IndexVector(rows)
}

/// Public ML-DSA seed `rho` for an identity.
pub fn derive_public_seed(handle: &IdentityHandle, matrix: &PubMatrix) -> Seed32 {
    matrix.select_sum(&map_indices(handle, matrix.dims()))
}

/// Matrix part of the private seed `rho'`, before registration randomness.
pub fn derive_private_partial(handle: &IdentityHandle, matrix: &PrivMatrix) -> Seed64 {
    matrix.select_sum(&map_indices(handle, matrix.dims()))
}
