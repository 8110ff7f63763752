//! Pseudorandom sampling: ExpandA, ExpandS, ExpandMask and SampleInBall.

use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::{Shake128, Shake256};

use crate::params::{Params, N, Q};
use crate::poly::{reduce, Poly, PolyVec};

/// H: SHAKE256 with `out_len` bytes of output over the concatenated inputs.
pub(crate) fn h(parts: &[&[u8]], out: &mut [u8]) {
    let mut x = Shake256::default();
    for p in parts {
        x.update(p);
    }
    x.finalize_xof().read(out);
}

fn h_reader(parts: &[&[u8]]) -> impl XofReader {
    let mut x = Shake256::default();
    for p in parts {
        x.update(p);
    }
    x.finalize_xof()
}

fn coeff_from_three_bytes(b0: u8, b1: u8, b2: u8) -> Option<i32> {
    let z = (i32::from(b2 & 0x7f) << 16) | (i32::from(b1) << 8) | i32::from(b0);
    (z < Q).then_some(z)
}

fn coeff_from_half_byte(b: u8, eta: i32) -> Option<i32> {
    match eta {
        2 if b < 15 => Some(2 - i32::from(b % 5)),
        4 if b < 9 => Some(4 - i32::from(b)),
        _ => None,
    }
}

/// Uniform polynomial in the NTT domain from a 34-byte seed.
fn rej_ntt_poly(seed: &[u8; 34]) -> Poly {
    let mut x = Shake128::default();
    x.update(seed);
    let mut reader = x.finalize_xof();
    let mut p = Poly::default();
    let mut j = 0;
    let mut buf = [0u8; 168];
    while j < N {
        reader.read(&mut buf);
        for c in buf.chunks_exact(3) {
            if let Some(v) = coeff_from_three_bytes(c[0], c[1], c[2]) {
                p.0[j] = v;
                j += 1;
                if j == N {
                    break;
                }
            }
        }
    }
    p
}

/// Polynomial with coefficients in `[-eta, eta]` from a 66-byte seed.
fn rej_bounded_poly(seed: &[u8; 66], eta: i32) -> Poly {
    let mut reader = h_reader(&[seed]);
    let mut p = Poly::default();
    let mut j = 0;
    let mut buf = [0u8; 136];
    'outer: loop {
        reader.read(&mut buf);
        for &z in &buf {
            for half in [z & 0x0f, z >> 4] {
                if let Some(v) = coeff_from_half_byte(half, eta) {
                    p.0[j] = reduce(i64::from(v));
                    j += 1;
                    if j == N {
                        break 'outer;
                    }
                }
            }
        }
    }
    p
}

/// ExpandA: the k x l matrix, already in the NTT domain.
pub(crate) fn expand_a(rho: &[u8; 32], p: &Params) -> Vec<PolyVec> {
    let mut seed = [0u8; 34];
    seed[..32].copy_from_slice(rho);
    (0..p.k)
        .map(|r| {
            (0..p.l)
                .map(|s| {
                    seed[32] = s as u8;
                    seed[33] = r as u8;
                    rej_ntt_poly(&seed)
                })
                .collect()
        })
        .collect()
}

/// ExpandS: the short secret vectors (s1, s2).
pub(crate) fn expand_s(rho_prime: &[u8; 64], p: &Params) -> (PolyVec, PolyVec) {
    let mut seed = [0u8; 66];
    seed[..64].copy_from_slice(rho_prime);
    let mut poly_at = |r: usize| {
        seed[64..].copy_from_slice(&(r as u16).to_le_bytes());
        rej_bounded_poly(&seed, p.eta)
    };
    let s1 = (0..p.l).map(&mut poly_at).collect();
    let s2 = (p.l..p.l + p.k).map(&mut poly_at).collect();
    (s1, s2)
}

/// ExpandMask: the masking vector y with coefficients in `[-gamma1 + 1, gamma1]`.
pub(crate) fn expand_mask(rho: &[u8; 64], kappa: u16, p: &Params) -> PolyVec {
    let bits = if p.gamma1 == 1 << 17 { 18 } else { 20 };
    let mut seed = [0u8; 66];
    seed[..64].copy_from_slice(rho);
    let mut buf = vec![0u8; 32 * bits];
    (0..p.l)
        .map(|r| {
            seed[64..].copy_from_slice(&(kappa + r as u16).to_le_bytes());
            h(&[&seed], &mut buf);
            crate::encode::bit_unpack(&buf, p.gamma1 - 1, p.gamma1)
        })
        .collect()
}

/// SampleInBall: a polynomial with exactly `tau` coefficients in {-1, 1}.
pub(crate) fn sample_in_ball(ctilde: &[u8], tau: usize) -> Poly {
    let mut reader = h_reader(&[ctilde]);
    let mut s = [0u8; 8];
    reader.read(&mut s);
    let signs = u64::from_le_bytes(s);
    let mut c = Poly::default();
    let mut j = [0u8; 1];
    for i in (N - tau)..N {
        loop {
            reader.read(&mut j);
            if usize::from(j[0]) <= i {
                break;
            }
        }
        let j = usize::from(j[0]);
        c.0[i] = c.0[j];
        c.0[j] = if (signs >> (i + tau - N)) & 1 == 1 { Q - 1 } else { 1 };
    }
    c
}
