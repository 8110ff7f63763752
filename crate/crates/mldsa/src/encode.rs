//! Bit packing and the byte encodings of keys and signatures.

use crate::params::{Params, D, N};
use crate::poly::{centered, reduce, Poly};

fn bitlen(x: u32) -> usize {
    (32 - x.leading_zeros()) as usize
}

/// Pack coefficients in `[0, 2^bits)`, least-significant bit first.
fn pack_bits(values: impl Iterator<Item = u32>, bits: usize, out: &mut Vec<u8>) {
    let mut acc: u64 = 0;
    let mut filled = 0;
    for v in values {
        acc |= u64::from(v) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
}

fn unpack_bits(bytes: &[u8], bits: usize) -> [u32; N] {
    let mut out = [0u32; N];
    let mut acc: u64 = 0;
    let mut filled = 0;
    let mut it = bytes.iter();
    let mask = (1u64 << bits) - 1;
    for o in out.iter_mut() {
        while filled < bits {
            acc |= u64::from(*it.next().expect("caller checks length")) << filled;
            filled += 8;
        }
        *o = (acc & mask) as u32;
        acc >>= bits;
        filled -= bits;
    }
    out
}

/// SimpleBitPack for coefficients in `[0, b]`.
pub(crate) fn simple_bit_pack(p: &Poly, b: u32, out: &mut Vec<u8>) {
    pack_bits(p.0.iter().map(|&c| c as u32), bitlen(b), out);
}

pub(crate) fn simple_bit_unpack(bytes: &[u8], b: u32) -> Poly {
    let vals = unpack_bits(bytes, bitlen(b));
    let mut p = Poly::default();
    for (c, v) in p.0.iter_mut().zip(vals) {
        *c = v as i32;
    }
    p
}

/// BitPack for coefficients in `[-a, b]` (stored mod q).
pub(crate) fn bit_pack(p: &Poly, a: i32, b: i32, out: &mut Vec<u8>) {
    pack_bits(
        p.0.iter().map(|&c| (b - centered(c)) as u32),
        bitlen((a + b) as u32),
        out,
    );
}

pub(crate) fn bit_unpack(bytes: &[u8], a: i32, b: i32) -> Poly {
    let vals = unpack_bits(bytes, bitlen((a + b) as u32));
    let mut p = Poly::default();
    for (c, v) in p.0.iter_mut().zip(vals) {
        *c = reduce(i64::from(b) - i64::from(v));
    }
    p
}

fn eta_bytes(p: &Params) -> usize {
    32 * bitlen(2 * p.eta as u32)
}

fn z_bytes(p: &Params) -> usize {
    32 * bitlen((2 * p.gamma1 - 1) as u32)
}

const T1_BYTES: usize = 320;
const T0_BYTES: usize = 32 * D as usize;

pub(crate) fn pack_t1(t1: &[Poly]) -> Vec<u8> {
    let mut out = Vec::with_capacity(t1.len() * T1_BYTES);
    for p in t1 {
        simple_bit_pack(p, (1 << 10) - 1, &mut out);
    }
    out
}

pub(crate) fn unpack_t1(bytes: &[u8]) -> Vec<Poly> {
    bytes
        .chunks_exact(T1_BYTES)
        .map(|c| simple_bit_unpack(c, (1 << 10) - 1))
        .collect()
}

pub(crate) fn pk_encode(rho: &[u8; 32], t1_packed: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + t1_packed.len());
    out.extend_from_slice(rho);
    out.extend_from_slice(t1_packed);
    out
}

pub(crate) struct SecretKey {
    pub rho: [u8; 32],
    pub key: [u8; 32],
    pub tr: [u8; 64],
    pub s1: Vec<Poly>,
    pub s2: Vec<Poly>,
    pub t0: Vec<Poly>,
}

pub(crate) fn sk_encode(sk: &SecretKey, p: &Params) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&sk.rho);
    out.extend_from_slice(&sk.key);
    out.extend_from_slice(&sk.tr);
    for s in sk.s1.iter().chain(&sk.s2) {
        bit_pack(s, p.eta, p.eta, &mut out);
    }
    for t in &sk.t0 {
        bit_pack(t, (1 << (D - 1)) - 1, 1 << (D - 1), &mut out);
    }
    out
}

/// Decode a secret key whose length has already been checked.
pub(crate) fn sk_decode(bytes: &[u8], p: &Params) -> SecretKey {
    let mut rho = [0u8; 32];
    let mut key = [0u8; 32];
    let mut tr = [0u8; 64];
    rho.copy_from_slice(&bytes[..32]);
    key.copy_from_slice(&bytes[32..64]);
    tr.copy_from_slice(&bytes[64..128]);
    let eb = eta_bytes(p);
    let mut off = 128;
    let mut take = |n: usize| {
        let s = &bytes[off..off + n];
        off += n;
        s
    };
    let s1 = (0..p.l).map(|_| bit_unpack(take(eb), p.eta, p.eta)).collect();
    let s2 = (0..p.k).map(|_| bit_unpack(take(eb), p.eta, p.eta)).collect();
    let t0 = (0..p.k)
        .map(|_| bit_unpack(take(T0_BYTES), (1 << (D - 1)) - 1, 1 << (D - 1)))
        .collect();
    SecretKey { rho, key, tr, s1, s2, t0 }
}

pub(crate) fn sig_encode(ctilde: &[u8], z: &[Poly], h: &[[bool; N]], p: &Params) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(ctilde);
    for zi in z {
        bit_pack(zi, p.gamma1 - 1, p.gamma1, &mut out);
    }
    let mut y = vec![0u8; p.omega + p.k];
    let mut index = 0;
    for (i, hi) in h.iter().enumerate() {
        for (j, &bit) in hi.iter().enumerate() {
            if bit {
                y[index] = j as u8;
                index += 1;
            }
        }
        y[p.omega + i] = index as u8;
    }
    out.extend_from_slice(&y);
    out
}

pub(crate) struct Signature {
    pub ctilde: Vec<u8>,
    pub z: Vec<Poly>,
    pub h: Vec<[bool; N]>,
}

/// Decode a signature of checked length; `None` on a malformed hint.
pub(crate) fn sig_decode(bytes: &[u8], p: &Params) -> Option<Signature> {
    let ctilde = bytes[..p.ctilde_len].to_vec();
    let zb = z_bytes(p);
    let z = bytes[p.ctilde_len..p.ctilde_len + p.l * zb]
        .chunks_exact(zb)
        .map(|c| bit_unpack(c, p.gamma1 - 1, p.gamma1))
        .collect();
    let h = hint_bit_unpack(&bytes[p.ctilde_len + p.l * zb..], p)?;
    Some(Signature { ctilde, z, h })
}

fn hint_bit_unpack(y: &[u8], p: &Params) -> Option<Vec<[bool; N]>> {
    let omega = p.omega;
    let mut h = vec![[false; N]; p.k];
    let mut index = 0usize;
    for (i, hi) in h.iter_mut().enumerate() {
        let end = usize::from(y[omega + i]);
        if end < index || end > omega {
            return None;
        }
        let first = index;
        while index < end {
            if index > first && y[index - 1] >= y[index] {
                return None;
            }
            hi[usize::from(y[index])] = true;
            index += 1;
        }
    }
    if y[index..omega].iter().any(|&b| b != 0) {
        return None;
    }
    Some(h)
}

pub(crate) fn w1_encode(w1: &[Poly], p: &Params) -> Vec<u8> {
    let b = ((crate::params::Q - 1) / (2 * p.gamma2) - 1) as u32;
    let mut out = Vec::new();
    for w in w1 {
        simple_bit_pack(w, b, &mut out);
    }
    out
}
