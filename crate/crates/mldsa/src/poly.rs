//! Polynomials over Z_q[X]/(X^256 + 1) and the number-theoretic transform.
//!
//! Coefficients are always kept reduced into `[0, q)`; signed views are
//! produced on demand with [`centered`].

use crate::params::{N, Q};

const ZETA: i64 = 1753;
/// 256^-1 mod q.
const N_INV: i64 = 8_347_681;

const fn pow_mod(mut base: i64, mut exp: u32) -> i64 {
    let mut acc = 1i64;
    base %= Q as i64;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % Q as i64;
        }
        base = base * base % Q as i64;
        exp >>= 1;
    }
    acc
}

const fn bitrev8(x: u32) -> u32 {
    (x as u8).reverse_bits() as u32
}

const ZETAS: [i32; N] = {
    let mut z = [0i32; N];
    let mut k = 0;
    while k < N {
        z[k] = pow_mod(ZETA, bitrev8(k as u32)) as i32;
        k += 1;
    }
    z
};

#[inline]
pub(crate) fn add(a: i32, b: i32) -> i32 {
    let s = a + b;
    if s >= Q {
        s - Q
    } else {
        s
    }
}

#[inline]
pub(crate) fn sub(a: i32, b: i32) -> i32 {
    let s = a - b;
    if s < 0 {
        s + Q
    } else {
        s
    }
}

#[inline]
pub(crate) fn mul(a: i32, b: i32) -> i32 {
    (i64::from(a) * i64::from(b) % i64::from(Q)) as i32
}

/// Reduce any integer into `[0, q)`.
#[inline]
pub(crate) fn reduce(a: i64) -> i32 {
    a.rem_euclid(i64::from(Q)) as i32
}

/// `a mod± q`, in `(-(q-1)/2, (q-1)/2]`.
#[inline]
pub(crate) fn centered(a: i32) -> i32 {
    if a > (Q - 1) / 2 {
        a - Q
    } else {
        a
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) struct Poly(pub [i32; N]);

impl Default for Poly {
    fn default() -> Self {
        Poly([0; N])
    }
}

impl Poly {
    pub fn add(&self, other: &Poly) -> Poly {
        let mut r = Poly::default();
        for i in 0..N {
            r.0[i] = add(self.0[i], other.0[i]);
        }
        r
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut r = Poly::default();
        for i in 0..N {
            r.0[i] = sub(self.0[i], other.0[i]);
        }
        r
    }

    /// Pointwise product; both operands in the NTT domain.
    pub fn pointwise(&self, other: &Poly) -> Poly {
        let mut r = Poly::default();
        for i in 0..N {
            r.0[i] = mul(self.0[i], other.0[i]);
        }
        r
    }

    /// Infinity norm of the centered representative.
    pub fn inf_norm(&self) -> i32 {
        self.0.iter().map(|&c| centered(c).abs()).max().unwrap_or(0)
    }

    pub fn ntt(&self) -> Poly {
        let mut w = self.0;
        let mut m = 0;
        let mut len = 128;
        while len >= 1 {
            let mut start = 0;
            while start < N {
                m += 1;
                let z = ZETAS[m];
                for j in start..start + len {
                    let t = mul(z, w[j + len]);
                    w[j + len] = sub(w[j], t);
                    w[j] = add(w[j], t);
                }
                start += 2 * len;
            }
            len /= 2;
        }
        Poly(w)
    }

    pub fn inv_ntt(&self) -> Poly {
        let mut w = self.0;
        let mut m = N;
        let mut len = 1;
        while len < N {
            let mut start = 0;
            while start < N {
                m -= 1;
                let z = Q - ZETAS[m];
                for j in start..start + len {
                    let t = w[j];
                    w[j] = add(t, w[j + len]);
                    w[j + len] = mul(z, sub(t, w[j + len]));
                }
                start += 2 * len;
            }
            len *= 2;
        }
        for c in w.iter_mut() {
            *c = (i64::from(*c) * N_INV % i64::from(Q)) as i32;
        }
        Poly(w)
    }
}

/// Vector of polynomials.
pub(crate) type PolyVec = Vec<Poly>;

pub(crate) fn ntt_vec(v: &[Poly]) -> PolyVec {
    v.iter().map(Poly::ntt).collect()
}

pub(crate) fn inv_ntt_vec(v: &[Poly]) -> PolyVec {
    v.iter().map(Poly::inv_ntt).collect()
}

/// `A * v` with `A` (k x l) and `v` (length l) both in the NTT domain.
pub(crate) fn mat_vec(a: &[PolyVec], v: &[Poly]) -> PolyVec {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(v)
                .fold(Poly::default(), |acc, (a, b)| acc.add(&a.pointwise(b)))
        })
        .collect()
}

pub(crate) fn vec_inf_norm(v: &[Poly]) -> i32 {
    v.iter().map(Poly::inf_norm).max().unwrap_or(0)
}
