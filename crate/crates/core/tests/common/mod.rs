//! Brute-force oracles shared by the integration tests. They work on exact
//! rationals and all-pairs / all-rectangle enumeration, independent of the
//! integer-numerator engines under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use carpet_core::model::{compose, compose_projected, CarpetSpec, Rect, TranslationVector, Word};
use carpet_core::rational::{floor, int, ratio, Rational};
use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use proptest::prelude::*;
use rand::Rng;

pub const BUDGET: u64 = 20_000_000;

pub fn words<T: Clone>(symbols: &[T], k: u32) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .iter()
            .flat_map(|w| {
                symbols.iter().map(move |s| {
                    let mut v = w.clone();
                    v.push(s.clone());
                    v
                })
            })
            .collect();
    }
    out
}

/// Minimum over all pairs of distinct level-`k` codes.
pub fn brute_delta(spec: &CarpetSpec, t: &TranslationVector, k: u32) -> Rational {
    let pts: Vec<Rational> = words(&spec.columns(), k)
        .into_iter()
        .map(|w| compose_projected(spec, t, &Word(w)).unwrap())
        .collect();
    let mut best: Option<Rational> = None;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let d = (&pts[a] - &pts[b]).abs();
            if best.as_ref().is_none_or(|x| d < *x) {
                best = Some(d);
            }
        }
    }
    best.expect("at least two codes")
}

/// `(row, col)` cells of side `n^{-level}` meeting the closed depth-`depth`
/// rectangles, with half-open cells and a closed last row/column.
pub fn brute_cells(
    spec: &CarpetSpec,
    t: &TranslationVector,
    level: u32,
    depth: u32,
) -> BTreeSet<(u64, u64)> {
    let side = u64::from(spec.n()).pow(level);
    let side_r = int(side as i64);
    let w = Rational::new(1.into(), BigInt::from(spec.m()).pow(depth));
    let h = Rational::new(1.into(), BigInt::from(spec.n()).pow(depth));
    let corners: BTreeSet<(Rational, Rational)> = words(spec.rects(), depth)
        .into_iter()
        .map(|word: Vec<Rect>| compose(spec, t, &word).unwrap())
        .collect();
    let idx = |v: &Rational| floor(&(v * &side_r)).to_u64().unwrap().min(side - 1);
    let mut cells = BTreeSet::new();
    for (x, y) in corners {
        let (c0, c1) = (idx(&x), idx(&(&x + &w)));
        let (r0, r1) = (idx(&y), idx(&(&y + &h)));
        for r in r0..=r1 {
            for c in c0..=c1 {
                cells.insert((r, c));
            }
        }
    }
    cells
}

pub fn spec_from_mask(m: u32, n: u32, mask: &[bool]) -> Option<CarpetSpec> {
    let rects: Vec<(u32, u32)> = (1..=m)
        .flat_map(|i| (1..=n).map(move |j| (i, j)))
        .zip(mask.iter().cycle())
        .filter(|(_, keep)| **keep)
        .map(|(r, _)| r)
        .collect();
    CarpetSpec::new(m, n, rects).ok()
}

pub fn random_spec(rng: &mut impl Rng, max_m: u32, max_extra: u32, density: f64) -> CarpetSpec {
    loop {
        let m = rng.random_range(2..=max_m);
        let n = m + rng.random_range(1..=max_extra);
        let mask: Vec<bool> = (0..m * n).map(|_| rng.random_bool(density)).collect();
        if let Some(s) = spec_from_mask(m, n, &mask) {
            return s;
        }
    }
}

/// Random `t_i = p/den` within `[0, 1 - 1/m]`.
pub fn random_translations(rng: &mut impl Rng, spec: &CarpetSpec, den: i64) -> TranslationVector {
    let m = i64::from(spec.m());
    let top = den * (m - 1) / m;
    let values = (0..spec.num_columns())
        .map(|_| ratio(rng.random_range(0..=top), den))
        .collect();
    TranslationVector::from_values(spec, values).unwrap()
}

/// Specs with `m ∈ [2, max_m]`, `n ∈ [m+1, m+max_extra]`.
pub fn arb_spec(max_m: u32, max_extra: u32, max_rects: usize) -> impl Strategy<Value = CarpetSpec> {
    (
        2..=max_m,
        1..=max_extra,
        proptest::collection::vec(any::<bool>(), 1..40),
    )
        .prop_filter_map("needs a rectangle", move |(m, extra, mask)| {
            let s = spec_from_mask(m, m + extra, &mask)?;
            (s.num_rects() <= max_rects).then_some(s)
        })
}

/// A spec together with translations of denominator `den`.
pub fn arb_translated(
    max_m: u32,
    max_extra: u32,
    max_rects: usize,
    den: i64,
) -> impl Strategy<Value = (CarpetSpec, TranslationVector)> {
    (
        arb_spec(max_m, max_extra, max_rects),
        proptest::collection::vec(0i64..=den, 8),
    )
        .prop_map(move |(s, raw)| {
            let m = i64::from(s.m());
            let top = den * (m - 1) / m;
            let values = (0..s.num_columns())
                .map(|c| ratio(raw[c] % (top + 1), den))
                .collect();
            let t = TranslationVector::from_values(&s, values).unwrap();
            (s, t)
        })
}
