//! Power2Round, Decompose and the hint functions.

use crate::params::{D, Q};

/// Split `r` into `(r1, r0)` with `r = r1 * 2^d + r0`, `r0` in `(-2^(d-1), 2^(d-1)]`.
pub(crate) fn power2round(r: i32) -> (i32, i32) {
    let half = 1 << (D - 1);
    let mut r0 = r & ((1 << D) - 1);
    if r0 > half {
        r0 -= 1 << D;
    }
    ((r - r0) >> D, r0)
}

/// Decompose for `r` in `[0, q)`; `r0` is returned as a signed value.
pub(crate) fn decompose(r: i32, gamma2: i32) -> (i32, i32) {
    let mut r0 = r % (2 * gamma2);
    if r0 > gamma2 {
        r0 -= 2 * gamma2;
    }
    if r - r0 == Q - 1 {
        (0, r0 - 1)
    } else {
        ((r - r0) / (2 * gamma2), r0)
    }
}

pub(crate) fn high_bits(r: i32, gamma2: i32) -> i32 {
    decompose(r, gamma2).0
}

pub(crate) fn low_bits(r: i32, gamma2: i32) -> i32 {
    decompose(r, gamma2).1
}

/// Whether adding `z` to `r` changes the high bits. Both arguments in `[0, q)`.
pub(crate) fn make_hint(z: i32, r: i32, gamma2: i32) -> bool {
    let rz = crate::poly::add(r, z);
    high_bits(r, gamma2) != high_bits(rz, gamma2)
}

pub(crate) fn use_hint(h: bool, r: i32, gamma2: i32) -> i32 {
    let m = (Q - 1) / (2 * gamma2);
    let (r1, r0) = decompose(r, gamma2);
    match (h, r0 > 0) {
        (false, _) => r1,
        (true, true) => (r1 + 1).rem_euclid(m),
        (true, false) => (r1 - 1).rem_euclid(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::reduce;

    const G44: i32 = (Q - 1) / 88;
    const G65: i32 = (Q - 1) / 32;

    #[test]
    fn power2round_reconstructs() {
        for r in (0..Q).step_by(997).chain([0, 1, 4096, 4097, Q - 1]) {
            let (r1, r0) = power2round(r);
            assert_eq!(r1 * (1 << D) + r0, r);
            assert!(r0 > -(1 << 12) && r0 <= 1 << 12);
        }
    }

    #[test]
    fn decompose_reconstructs() {
        for g in [G44, G65] {
            for r in (0..Q).step_by(1013).chain([Q - 1, Q - 2, g, 2 * g]) {
                let (r1, r0) = decompose(r, g);
                assert_eq!(reduce(i64::from(r1) * i64::from(2 * g) + i64::from(r0)), r);
                assert!(r0 >= -g && r0 <= g);
                assert!(r1 >= 0 && r1 < (Q - 1) / (2 * g));
            }
        }
    }

    #[test]
    fn hint_recovers_high_bits() {
        // UseHint(MakeHint(z, r), r) = HighBits(r + z) for small z.
        for g in [G44, G65] {
            for (i, r) in (0..Q).step_by(7919).enumerate() {
                let z = reduce(((i as i64 * 7_777) % i64::from(g)) - i64::from(g) / 2);
                let h = make_hint(z, r, g);
                assert_eq!(use_hint(h, r, g), high_bits(crate::poly::add(r, z), g));
            }
        }
    }
}
