//! Index mapping and public seed derivation against an independent
//! reference: frozen fixtures from `data/mapping_oracle.py`, plus a
//! big-integer reimplementation run over random handles.

use ipkpq_core::seed::{derive_public_seed, map_indices, Dimensions, IdentityHandle, PubMatrix};
use num_bigint::BigUint;
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixtures {
    fixtures: Vec<Fixture>,
}

#[derive(Deserialize)]
struct Fixture {
    m: usize,
    h: usize,
    cases: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    id: String,
    r: String,
    digest: String,
    indices: Vec<usize>,
    rho: String,
}

fn patterned(dims: Dimensions) -> PubMatrix {
    let entries = (0..dims.m())
        .flat_map(|r| (0..dims.h()).map(move |c| (r, c)))
        .map(|(r, c)| std::array::from_fn(|j| ((r * 37 + c * 11 + j * 3 + 1) % 256) as u8))
        .collect();
    PubMatrix::from_entries(dims, entries).unwrap()
}

#[test]
fn frozen_fixtures_match() {
    let text = include_str!("data/mapping_fixtures.json");
    let fx: Fixtures = serde_json::from_str(text).unwrap();
    assert_eq!(fx.fixtures.len(), 2);
    for f in fx.fixtures {
        let dims = Dimensions::new(f.m, f.h).unwrap();
        let matrix = patterned(dims);
        for c in f.cases {
            let r: [u8; 32] = hex::decode(&c.r).unwrap().try_into().unwrap();
            let handle = IdentityHandle::new(c.id.clone(), r).unwrap();
            assert_eq!(hex::encode(handle.digest()), c.digest, "{}", c.id);
            assert_eq!(map_indices(&handle, dims).rows(), &c.indices[..], "{} m={}", c.id, f.m);
            assert_eq!(hex::encode(derive_public_seed(&handle, &matrix)), c.rho, "{} m={}", c.id, f.m);
        }
    }
}

/// Segment extraction by shifting one 256-bit integer.
fn bigint_indices(digest: &[u8; 32], m: usize, h: usize) -> Vec<usize> {
    let value = BigUint::from_bytes_be(digest);
    let width = 256 / h;
    let mask = (BigUint::from(1u8) << width) - 1u8;
    (0..h)
        .map(|c| {
            let seg = (&value >> (256 - (c + 1) * width)) & &mask;
            let r = seg % BigUint::from(m);
            r.to_u64_digits().first().copied().unwrap_or(0) as usize
        })
        .collect()
}

fn arb_dims() -> impl Strategy<Value = Dimensions> {
    // h divides 256 and m fits in a segment.
    prop_oneof![Just(1usize), Just(2), Just(4), Just(8), Just(16), Just(32), Just(64), Just(128), Just(256)]
        .prop_flat_map(|h| {
            let max_m = if 256 / h >= 20 { 1 << 20 } else { 1usize << (256 / h) };
            (2..=max_m.max(2), Just(h))
        })
        .prop_filter_map("valid", |(m, h)| Dimensions::relaxed(m, h).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_bigint_reference(
        dims in arb_dims(),
        id in "[A-Za-z0-9]{1,12}(\\|\\|[A-Za-z0-9]{1,12}){0,3}",
        r in any::<[u8; 32]>(),
    ) {
        let handle = IdentityHandle::new(id, r).unwrap();
        let expected = bigint_indices(&handle.digest(), dims.m(), dims.h());
        let got = map_indices(&handle, dims);
        prop_assert_eq!(got.rows(), &expected[..]);
    }
}
