//! KeyGen_internal, Sign_internal and Verify_internal.

use crate::encode::{self, SecretKey};
use crate::params::{Level, Params, D, N};
use crate::poly::{self, inv_ntt_vec, mat_vec, ntt_vec, vec_inf_norm, Poly, PolyVec};
use crate::rounding::{high_bits, low_bits, make_hint, power2round, use_hint};
use crate::sample::{expand_a, expand_mask, expand_s, h, sample_in_ball};

/// Everything key generation derives from (rho, rho', K).
pub(crate) struct Expanded {
    pub t1_packed: Vec<u8>,
    pub tr: [u8; 64],
    pub sk: Vec<u8>,
    pub pk: Vec<u8>,
}

pub(crate) fn keygen_internal(
    level: Level,
    rho: &[u8; 32],
    rho_prime: &[u8; 64],
    key: &[u8; 32],
) -> Expanded {
    let p = level.params();
    let a_hat = expand_a(rho, p);
    let (s1, s2) = expand_s(rho_prime, p);
    let t: PolyVec = inv_ntt_vec(&mat_vec(&a_hat, &ntt_vec(&s1)))
        .iter()
        .zip(&s2)
        .map(|(as1, s2)| as1.add(s2))
        .collect();
    let mut t1 = vec![Poly::default(); p.k];
    let mut t0 = vec![Poly::default(); p.k];
    for (i, ti) in t.iter().enumerate() {
        for j in 0..N {
            let (hi, lo) = power2round(ti.0[j]);
            t1[i].0[j] = hi;
            t0[i].0[j] = poly::reduce(i64::from(lo));
        }
    }
    let t1_packed = encode::pack_t1(&t1);
    let pk = encode::pk_encode(rho, &t1_packed);
    let mut tr = [0u8; 64];
    h(&[&pk], &mut tr);
    let sk = encode::sk_encode(
        &SecretKey {
            rho: *rho,
            key: *key,
            tr,
            s1,
            s2,
            t0,
        },
        p,
    );
    Expanded {
        t1_packed,
        tr,
        sk,
        pk,
    }
}

fn scalar_ntt(c_hat: &Poly, v_hat: &[Poly]) -> PolyVec {
    inv_ntt_vec(&v_hat.iter().map(|v| c_hat.pointwise(v)).collect::<Vec<_>>())
}

/// Sign_internal over an already formatted message `m_prime`.
pub(crate) fn sign_internal(level: Level, sk_bytes: &[u8], m_prime: &[u8], rnd: &[u8; 32]) -> Vec<u8> {
    let p = level.params();
    let sk = encode::sk_decode(sk_bytes, p);
    let s1_hat = ntt_vec(&sk.s1);
    let s2_hat = ntt_vec(&sk.s2);
    let t0_hat = ntt_vec(&sk.t0);
    let a_hat = expand_a(&sk.rho, p);

    let mut mu = [0u8; 64];
    h(&[&sk.tr, m_prime], &mut mu);
    let mut rho_pp = [0u8; 64];
    h(&[&sk.key, rnd, &mu], &mut rho_pp);

    let mut kappa: u16 = 0;
    let mut ctilde = vec![0u8; p.ctilde_len];
    loop {
        let y = expand_mask(&rho_pp, kappa, p);
        kappa = kappa.wrapping_add(p.l as u16);

        let w = inv_ntt_vec(&mat_vec(&a_hat, &ntt_vec(&y)));
        let w1: PolyVec = w.iter().map(|wi| map_coeffs(wi, |c| high_bits(c, p.gamma2))).collect();
        h(&[&mu, &encode::w1_encode(&w1, p)], &mut ctilde);
        let c_hat = sample_in_ball(&ctilde, p.tau).ntt();

        let cs1 = scalar_ntt(&c_hat, &s1_hat);
        let cs2 = scalar_ntt(&c_hat, &s2_hat);
        let z: PolyVec = y.iter().zip(&cs1).map(|(a, b)| a.add(b)).collect();
        let w_minus_cs2: PolyVec = w.iter().zip(&cs2).map(|(a, b)| a.sub(b)).collect();

        if vec_inf_norm(&z) >= p.gamma1 - p.beta {
            continue;
        }
        let r0_norm = w_minus_cs2
            .iter()
            .flat_map(|r| r.0.iter().map(|&c| low_bits(c, p.gamma2).abs()))
            .max()
            .unwrap_or(0);
        if r0_norm >= p.gamma2 - p.beta {
            continue;
        }

        let ct0 = scalar_ntt(&c_hat, &t0_hat);
        if vec_inf_norm(&ct0) >= p.gamma2 {
            continue;
        }
        let hint = make_hints(&ct0, &w_minus_cs2, p);
        let ones: usize = hint.iter().map(|hi| hi.iter().filter(|&&b| b).count()).sum();
        if ones > p.omega {
            continue;
        }
        return encode::sig_encode(&ctilde, &z, &hint, p);
    }
}

fn map_coeffs(p: &Poly, f: impl Fn(i32) -> i32) -> Poly {
    let mut r = Poly::default();
    for (o, &c) in r.0.iter_mut().zip(&p.0) {
        *o = f(c);
    }
    r
}

/// MakeHint(-ct0, w - cs2 + ct0) coefficient-wise.
fn make_hints(ct0: &[Poly], w_minus_cs2: &[Poly], p: &Params) -> Vec<[bool; N]> {
    ct0.iter()
        .zip(w_minus_cs2)
        .map(|(ct0, wcs2)| {
            let mut hi = [false; N];
            for j in 0..N {
                let neg = poly::sub(0, ct0.0[j]);
                let r = poly::add(wcs2.0[j], ct0.0[j]);
                hi[j] = make_hint(neg, r, p.gamma2);
            }
            hi
        })
        .collect()
}

/// Verify_internal; `pk` and `sig` lengths already checked.
pub(crate) fn verify_internal(level: Level, pk: &[u8], m_prime: &[u8], sig: &[u8]) -> bool {
    let p = level.params();
    let Some(sig) = encode::sig_decode(sig, p) else {
        return false;
    };
    if vec_inf_norm(&sig.z) >= p.gamma1 - p.beta {
        return false;
    }
    let mut rho = [0u8; 32];
    rho.copy_from_slice(&pk[..32]);
    let t1 = encode::unpack_t1(&pk[32..]);
    let a_hat = expand_a(&rho, p);
    let mut tr = [0u8; 64];
    h(&[pk], &mut tr);
    let mut mu = [0u8; 64];
    h(&[&tr, m_prime], &mut mu);
    let c_hat = sample_in_ball(&sig.ctilde, p.tau).ntt();

    let az = mat_vec(&a_hat, &ntt_vec(&sig.z));
    let w_approx: PolyVec = az
        .iter()
        .zip(&t1)
        .map(|(az, t1)| {
            let t1_shifted = map_coeffs(t1, |c| poly::reduce(i64::from(c) << D));
            az.sub(&c_hat.pointwise(&t1_shifted.ntt())).inv_ntt()
        })
        .collect();
    let w1: PolyVec = w_approx
        .iter()
        .zip(&sig.h)
        .map(|(w, hi)| {
            let mut r = Poly::default();
            for j in 0..N {
                r.0[j] = use_hint(hi[j], w.0[j], p.gamma2);
            }
            r
        })
        .collect();
    let mut ctilde = vec![0u8; p.ctilde_len];
    h(&[&mu, &encode::w1_encode(&w1, p)], &mut ctilde);
    ctilde == sig.ctilde
}
