//! Cylinder separation `Δ_k`, exact-overlap witnesses and the linear form
//! `Δ_{ρ,ρ'}(t) = Σ c_ℓ t_ℓ`.
//!
//! Level-`k` points `S̄_ρ(0)` are kept as integer numerators over the common
//! denominator `q·m^{k-1}` (`q` = lcm of the translation denominators), so
//! appending a symbol is `v ↦ m·v + T_c` and no rational is normalized in the
//! hot loop. The integer width is picked from an a-priori bound.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_budget, Error, Result};
use crate::model::{CarpetSpec, TranslationVector, Word};
use crate::rational::{lcm_of_denominators, ln_rational, pow_u, ratio, Rational};

pub const DEFAULT_BUDGET: u64 = 20_000_000;

/// Final decay at most `(1 + DECAY_TOLERANCE)·log m` counts as bounded.
pub const DECAY_TOLERANCE: f64 = 0.10;
/// A decay that has not increased over this many trailing depths counts as bounded.
pub const PLATEAU_DEPTHS: usize = 3;

trait Coord: Clone + Ord + Send + Sync {
    fn from_big(v: &BigUint) -> Self;
    fn to_big(&self) -> BigUint;
    fn step(&self, m: u64, t: &Self) -> Self;
    fn gap(&self, lower: &Self) -> Self;
    fn is_zero(&self) -> bool;
}

impl Coord for u64 {
    fn from_big(v: &BigUint) -> Self {
        v.to_u64().expect("bound checked")
    }
    fn to_big(&self) -> BigUint {
        BigUint::from(*self)
    }
    fn step(&self, m: u64, t: &Self) -> Self {
        self * m + t
    }
    fn gap(&self, lower: &Self) -> Self {
        self - lower
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
}

impl Coord for u128 {
    fn from_big(v: &BigUint) -> Self {
        v.to_u128().expect("bound checked")
    }
    fn to_big(&self) -> BigUint {
        BigUint::from(*self)
    }
    fn step(&self, m: u64, t: &Self) -> Self {
        self * u128::from(m) + t
    }
    fn gap(&self, lower: &Self) -> Self {
        self - lower
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
}

impl Coord for BigUint {
    fn from_big(v: &BigUint) -> Self {
        v.clone()
    }
    fn to_big(&self) -> BigUint {
        self.clone()
    }
    fn step(&self, m: u64, t: &Self) -> Self {
        self * m + t
    }
    fn gap(&self, lower: &Self) -> Self {
        self - lower
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

/// Translations over a common denominator.
struct Ctx {
    m: u64,
    cols: Vec<u32>,
    numerators: Vec<BigUint>,
    q: BigUint,
}

impl Ctx {
    fn new(spec: &CarpetSpec, t: &TranslationVector) -> Self {
        let q = lcm_of_denominators(t.values());
        let qi = BigInt::from(q.clone());
        let numerators = t
            .values()
            .map(|v| {
                let scaled = v * Rational::from_integer(qi.clone());
                scaled
                    .to_integer()
                    .to_biguint()
                    .expect("translations are non-negative")
            })
            .collect();
        Ctx {
            m: u64::from(spec.m()),
            cols: t.iter().map(|(i, _)| i).collect(),
            numerators,
            q,
        }
    }

    fn d(&self) -> usize {
        self.cols.len()
    }

    /// `q·m^{k-1}`
    fn denominator(&self, k: u32) -> BigUint {
        &self.q * pow_u(self.m, k - 1)
    }

    /// `|D̄|^k`, saturating.
    fn count(&self, k: u32) -> u128 {
        (self.d() as u128).checked_pow(k).unwrap_or(u128::MAX)
    }

    fn check(&self, k: u32, budget: u64) -> Result<()> {
        check_budget(self.count(k), budget)
    }

    fn bits_needed(&self, k: u32) -> u64 {
        // every numerator is below q·m^k
        (&self.q * pow_u(self.m, k)).bits()
    }

    fn decode(&self, mut index: usize, k: u32) -> Word {
        let d = self.d();
        let mut symbols = vec![0u32; k as usize];
        for slot in symbols.iter_mut().rev() {
            *slot = self.cols[index % d];
            index /= d;
        }
        Word(symbols)
    }
}

enum Width {
    U64,
    U128,
    Big,
}

fn width_for(bits: u64) -> Width {
    if bits < 64 {
        Width::U64
    } else if bits < 128 {
        Width::U128
    } else {
        Width::Big
    }
}

fn expand<T: Coord>(prev: &[T], m: u64, ts: &[T]) -> Vec<T> {
    prev.par_iter()
        .flat_map_iter(|v| ts.iter().map(move |t| v.step(m, t)))
        .collect()
}

/// Level-`k` numerators in word order (first symbol most significant).
fn indexed_level<T: Coord>(ctx: &Ctx, k: u32) -> Vec<T> {
    let ts: Vec<T> = ctx.numerators.iter().map(T::from_big).collect();
    let mut cur = ts.clone();
    for _ in 1..k {
        cur = expand(&cur, ctx.m, &ts);
    }
    cur
}

fn min_adjacent_gap<T: Coord>(sorted: &[T]) -> Option<T> {
    sorted.par_windows(2).map(|w| w[1].gap(&w[0])).min()
}

/// The pair of word indices realizing the minimal gap at level `k`.
fn min_pair_impl<T: Coord>(ctx: &Ctx, k: u32) -> (usize, usize, BigUint) {
    let pts: Vec<T> = indexed_level(ctx, k);
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.par_sort_by(|&a, &b| pts[a].cmp(&pts[b]).then(a.cmp(&b)));
    let (lo, hi) = order
        .windows(2)
        .min_by(|x, y| pts[x[1]].gap(&pts[x[0]]).cmp(&pts[y[1]].gap(&pts[y[0]])))
        .map(|w| (w[0], w[1]))
        .expect("at least two words");
    let gap = pts[hi].gap(&pts[lo]).to_big();
    (lo, hi, gap)
}

fn sorted_level_impl<T: Coord>(ctx: &Ctx, k: u32) -> Vec<BigUint> {
    let mut pts: Vec<T> = indexed_level(ctx, k);
    pts.par_sort_unstable();
    pts.iter().map(Coord::to_big).collect()
}

/// All `|D̄|^k` values `S̄_ρ(0)`, sorted, duplicates kept.
pub fn level_points(
    spec: &CarpetSpec,
    t: &TranslationVector,
    k: u32,
    budget: u64,
) -> Result<Vec<Rational>> {
    if k == 0 {
        return Err(Error::invalid("depth k must be at least 1"));
    }
    let ctx = Ctx::new(spec, t);
    ctx.check(k, budget)?;
    let nums = match width_for(ctx.bits_needed(k)) {
        Width::U64 => sorted_level_impl::<u64>(&ctx, k),
        Width::U128 => sorted_level_impl::<u128>(&ctx, k),
        Width::Big => sorted_level_impl::<BigUint>(&ctx, k),
    };
    let den = BigInt::from(ctx.denominator(k));
    Ok(nums
        .into_iter()
        .map(|v| Rational::new(BigInt::from(v), den.clone()))
        .collect())
}

fn needs_two_columns(spec: &CarpetSpec) -> Result<()> {
    if spec.num_columns() < 2 {
        return Err(Error::invalid(
            "cylinder separation needs at least two occupied columns",
        ));
    }
    Ok(())
}

/// Minimal distance between distinct level-`k` codes (0 on coincidence).
pub fn delta_k(spec: &CarpetSpec, t: &TranslationVector, k: u32, budget: u64) -> Result<Rational> {
    Ok(min_gap_pair(spec, t, k, budget)?.2)
}

/// Two distinct words realizing `Δ_k`, and `Δ_k` itself.
pub fn min_gap_pair(
    spec: &CarpetSpec,
    t: &TranslationVector,
    k: u32,
    budget: u64,
) -> Result<(Word, Word, Rational)> {
    needs_two_columns(spec)?;
    if k == 0 {
        return Err(Error::invalid("depth k must be at least 1"));
    }
    let ctx = Ctx::new(spec, t);
    ctx.check(k, budget)?;
    let (a, b, gap) = match width_for(ctx.bits_needed(k)) {
        Width::U64 => min_pair_impl::<u64>(&ctx, k),
        Width::U128 => min_pair_impl::<u128>(&ctx, k),
        Width::Big => min_pair_impl::<BigUint>(&ctx, k),
    };
    let delta = Rational::new(BigInt::from(gap), BigInt::from(ctx.denominator(k)));
    // larger index first
    Ok((ctx.decode(b, k), ctx.decode(a, k), delta))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapWitness {
    pub k: u32,
    pub rho: Word,
    pub rho_prime: Word,
    /// `c_ℓ` keyed by column
    #[serde(serialize_with = "serialize_coefficients")]
    pub coefficients: BTreeMap<u32, Rational>,
}

fn serialize_coefficients<S: serde::Serializer>(
    c: &BTreeMap<u32, Rational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(c.len()))?;
    for (l, v) in c {
        map.serialize_entry(&l.to_string(), &crate::rational::format_rational(v))?;
    }
    map.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaEntry {
    pub k: u32,
    #[serde(serialize_with = "serialize_rational")]
    pub delta: Rational,
    /// `-log Δ_k / k`, infinite when `Δ_k = 0`
    pub decay: f64,
}

fn serialize_rational<S: serde::Serializer>(
    r: &Rational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&crate::rational::format_rational(r))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Classification {
    ExactOverlap(OverlapWitness),
    NoConcentrationEvidence,
    Inconclusive,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::ExactOverlap(_) => "ExactOverlap",
            Classification::NoConcentrationEvidence => "NoConcentrationEvidence",
            Classification::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaProfile {
    pub entries: Vec<DeltaEntry>,
    pub classification: Classification,
    /// Point count of the first depth that did not fit the budget.
    pub budget_exhausted: Option<u128>,
}

fn decay_of(delta: &Rational, k: u32) -> f64 {
    if delta.is_zero() {
        f64::INFINITY
    } else {
        -ln_rational(delta) / f64::from(k)
    }
}

/// Gaps for `k = 1..=max_k`, stopping at the first zero or at the budget.
/// Each level is expanded from the sorted previous one, since only the
/// multiset matters for the gap.
fn gaps_impl<T: Coord>(ctx: &Ctx, max_k: u32, budget: u64) -> (Vec<BigUint>, Option<u128>) {
    let ts: Vec<T> = ctx.numerators.iter().map(T::from_big).collect();
    let mut gaps = Vec::new();
    let mut cur: Vec<T> = Vec::new();
    for k in 1..=max_k {
        if ctx.check(k, budget).is_err() {
            return (gaps, Some(ctx.count(k)));
        }
        cur = if k == 1 {
            ts.clone()
        } else {
            expand(&cur, ctx.m, &ts)
        };
        cur.par_sort_unstable();
        let gap = min_adjacent_gap(&cur).expect("at least two points");
        let zero = gap.is_zero();
        gaps.push(gap.to_big());
        if zero {
            break;
        }
    }
    (gaps, None)
}

/// `Δ_k` for `k = 1..=max_k` with a concentration verdict. On budget
/// exhaustion the profile is truncated and, unless an overlap was already
/// found, marked inconclusive.
pub fn decay_profile(
    spec: &CarpetSpec,
    t: &TranslationVector,
    max_k: u32,
    budget: u64,
) -> Result<DeltaProfile> {
    needs_two_columns(spec)?;
    if max_k == 0 {
        return Err(Error::invalid("max depth must be at least 1"));
    }
    let ctx = Ctx::new(spec, t);
    let (gaps, exhausted) = match width_for(ctx.bits_needed(max_k)) {
        Width::U64 => gaps_impl::<u64>(&ctx, max_k, budget),
        Width::U128 => gaps_impl::<u128>(&ctx, max_k, budget),
        Width::Big => gaps_impl::<BigUint>(&ctx, max_k, budget),
    };
    let mut entries: Vec<DeltaEntry> = gaps
        .into_iter()
        .zip(1u32..)
        .map(|(g, k)| {
            let delta = Rational::new(BigInt::from(g), BigInt::from(ctx.denominator(k)));
            let decay = decay_of(&delta, k);
            DeltaEntry { k, delta, decay }
        })
        .collect();

    let first_zero = entries.iter().find(|e| e.delta.is_zero()).map(|e| e.k);
    if let Some(k0) = first_zero {
        // Δ is nonincreasing, so every deeper level is 0 as well
        for k in k0 + 1..=max_k {
            entries.push(DeltaEntry {
                k,
                delta: Rational::zero(),
                decay: f64::INFINITY,
            });
        }
        let (rho, rho_prime, _) = min_gap_pair(spec, t, k0, budget)?;
        let coefficients = linear_form(spec, &rho, &rho_prime)?;
        let witness = OverlapWitness {
            k: k0,
            rho,
            rho_prime,
            coefficients,
        };
        return Ok(DeltaProfile {
            entries,
            classification: Classification::ExactOverlap(witness),
            budget_exhausted: None,
        });
    }

    let classification = if exhausted.is_some() || entries.is_empty() {
        Classification::Inconclusive
    } else {
        classify(&entries, ctx.m)
    };
    Ok(DeltaProfile {
        entries,
        classification,
        budget_exhausted: exhausted,
    })
}

fn classify(entries: &[DeltaEntry], m: u64) -> Classification {
    let decays: Vec<f64> = entries.iter().map(|e| e.decay).collect();
    let last = *decays.last().expect("non-empty");
    let ln_m = (m as f64).ln();
    let near_log_m = last <= (1.0 + DECAY_TOLERANCE) * ln_m;
    let plateau = decays.len() >= PLATEAU_DEPTHS
        && decays[decays.len() - PLATEAU_DEPTHS..]
            .windows(2)
            .all(|w| w[1] <= w[0]);
    if near_log_m || plateau {
        Classification::NoConcentrationEvidence
    } else {
        Classification::Inconclusive
    }
}

/// Smallest `k <= max_k` with `Δ_k = 0` and a witness pair.
pub fn detect_exact_overlap(
    spec: &CarpetSpec,
    t: &TranslationVector,
    max_k: u32,
    budget: u64,
) -> Result<Option<OverlapWitness>> {
    let profile = decay_profile(spec, t, max_k, budget)?;
    match profile.classification {
        Classification::ExactOverlap(w) => Ok(Some(w)),
        _ => match profile.budget_exhausted {
            Some(needed) => Err(Error::Budget { needed, budget }),
            None => Ok(None),
        },
    }
}

/// Coefficients of `S̄_ρ(0) - S̄_ρ'(0) = Σ_ℓ c_ℓ t_ℓ`:
/// `c_ℓ = Σ_{i_k=ℓ} a^{k-1} - Σ_{j_k=ℓ} a^{k-1}` with `a = 1/m`.
/// Every occupied column gets an entry.
pub fn linear_form(
    spec: &CarpetSpec,
    rho: &Word,
    rho_prime: &Word,
) -> Result<BTreeMap<u32, Rational>> {
    if rho.len() != rho_prime.len() {
        return Err(Error::invalid("words must have equal length"));
    }
    if rho == rho_prime {
        return Err(Error::invalid("words must be distinct"));
    }
    let mut c: BTreeMap<u32, Rational> = spec
        .columns()
        .into_iter()
        .map(|i| (i, Rational::zero()))
        .collect();
    let a = ratio(1, i64::from(spec.m()));
    let mut power = Rational::one();
    for (&i, &j) in rho.symbols().iter().zip(rho_prime.symbols()) {
        for (sym, sign) in [(i, 1), (j, -1)] {
            let entry = c
                .get_mut(&sym)
                .ok_or_else(|| Error::invalid(format!("symbol {sym} is not an occupied column")))?;
            if sign > 0 {
                *entry += &power;
            } else {
                *entry -= &power;
            }
        }
        power *= &a;
    }
    Ok(c)
}

/// `Σ_ℓ c_ℓ t_ℓ`
pub fn evaluate_linear_form(c: &BTreeMap<u32, Rational>, t: &TranslationVector) -> Rational {
    c.iter()
        .map(|(l, cl)| cl * t.get(*l).expect("coefficient keyed by an occupied column"))
        .fold(Rational::zero(), |acc, v| acc + v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::compose_projected;
    use crate::rational::int;

    fn three(m: u32, t: [(i64, i64); 3]) -> (CarpetSpec, TranslationVector) {
        let spec = CarpetSpec::new(m, m + 1, [(1, 1), (2, 1), (3, 1)]).unwrap();
        let t =
            TranslationVector::from_values(&spec, t.iter().map(|&(p, q)| ratio(p, q)).collect())
                .unwrap();
        (spec, t)
    }

    #[test]
    fn standard_level_two_is_ninths() {
        let (s, t) = three(3, [(0, 1), (1, 3), (2, 3)]);
        let pts = level_points(&s, &t, 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(pts, (0..9).map(|j| ratio(j, 9)).collect::<Vec<_>>());
        for k in 1..=7 {
            assert_eq!(
                delta_k(&s, &t, k, DEFAULT_BUDGET).unwrap(),
                Rational::new(1.into(), BigInt::from(3u32).pow(k))
            );
        }
    }

    #[test]
    fn single_column_point() {
        let spec = CarpetSpec::new(3, 4, [(2, 1)]).unwrap();
        let t = TranslationVector::standard(&spec);
        let pts = level_points(&spec, &t, 3, DEFAULT_BUDGET).unwrap();
        assert_eq!(pts, vec![ratio(1, 3) * ratio(13, 9)]);
        assert!(delta_k(&spec, &t, 2, DEFAULT_BUDGET).is_err());
    }

    #[test]
    fn overlap_example() {
        let (s, t) = three(4, [(0, 1), (1, 4), (5, 16)]);
        let pts = level_points(&s, &t, 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts.iter().filter(|p| **p == ratio(5, 16)).count(), 2);
        assert_eq!(delta_k(&s, &t, 2, DEFAULT_BUDGET).unwrap(), int(0));
        let w = detect_exact_overlap(&s, &t, 5, DEFAULT_BUDGET)
            .unwrap()
            .unwrap();
        assert_eq!(w.k, 2);
        assert_eq!(
            (w.rho.clone(), w.rho_prime.clone()),
            (Word(vec![3, 1]), Word(vec![2, 2]))
        );
        assert_eq!(evaluate_linear_form(&w.coefficients, &t), int(0));
    }

    #[test]
    fn duplicate_translations_overlap_at_depth_one() {
        let (s, t) = three(3, [(0, 1), (1, 3), (1, 3)]);
        let p = decay_profile(&s, &t, 4, DEFAULT_BUDGET).unwrap();
        let Classification::ExactOverlap(w) = &p.classification else {
            panic!()
        };
        assert_eq!(w.k, 1);
        assert_eq!(p.entries.len(), 4);
        assert!(p.entries.iter().all(|e| e.delta.is_zero()));
    }

    #[test]
    fn no_overlap_cases() {
        let (s, t) = three(3, [(0, 1), (1, 3), (2, 3)]);
        assert_eq!(
            detect_exact_overlap(&s, &t, 8, DEFAULT_BUDGET).unwrap(),
            None
        );
        let p = decay_profile(&s, &t, 8, DEFAULT_BUDGET).unwrap();
        for e in &p.entries {
            assert!((e.decay - 3f64.ln()).abs() < 1e-12);
        }
        assert_eq!(p.classification, Classification::NoConcentrationEvidence);

        let (s, t) = three(3, [(0, 1), (1, 4), (1, 2)]);
        let p = decay_profile(&s, &t, 8, DEFAULT_BUDGET).unwrap();
        assert_eq!(p.classification, Classification::NoConcentrationEvidence);
        for e in &p.entries {
            let want = Rational::new(
                1.into(),
                BigInt::from(4u32) * BigInt::from(3u32).pow(e.k - 1),
            );
            assert_eq!(e.delta, want, "k = {}", e.k);
        }
        assert!((p.entries[7].decay - 1.1345725477245823).abs() < 1e-12);
    }

    #[test]
    fn budget_truncates_profile() {
        let (s, t) = three(3, [(0, 1), (1, 4), (1, 2)]);
        let p = decay_profile(&s, &t, 6, 100).unwrap();
        assert_eq!(p.entries.len(), 4);
        assert_eq!(p.budget_exhausted, Some(243));
        assert_eq!(p.classification, Classification::Inconclusive);
        assert!(matches!(delta_k(&s, &t, 5, 100), Err(Error::Budget { .. })));
        assert!(matches!(
            detect_exact_overlap(&s, &t, 6, 100),
            Err(Error::Budget { .. })
        ));
    }

    fn brute_delta(spec: &CarpetSpec, t: &TranslationVector, k: u32) -> Rational {
        let cols = spec.columns();
        let mut words: Vec<Vec<u32>> = vec![vec![]];
        for _ in 0..k {
            words = words
                .iter()
                .flat_map(|w| cols.iter().map(move |&c| [w.clone(), vec![c]].concat()))
                .collect();
        }
        let pts: Vec<Rational> = words
            .into_iter()
            .map(|w| compose_projected(spec, t, &Word(w)).unwrap())
            .collect();
        let mut best: Option<Rational> = None;
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                let d = num_traits::Signed::abs(&(&pts[a] - &pts[b]));
                if best.as_ref().is_none_or(|x| d < *x) {
                    best = Some(d);
                }
            }
        }
        best.unwrap()
    }

    #[test]
    fn wide_integers_agree() {
        // denominators of ~67 and ~137 bits select the u128 and big-integer paths
        for den in [
            "100000000000000000001",
            "100000000000000000000000000000000000000001",
        ] {
            let spec = CarpetSpec::new(4, 5, [(1, 1), (2, 1), (3, 1)]).unwrap();
            let t2 = crate::rational::parse_rational(&format!("7/{den}")).unwrap();
            let t = TranslationVector::from_values(&spec, vec![int(0), t2, ratio(3, 4)]).unwrap();
            for k in 1..=4 {
                let d = delta_k(&spec, &t, k, DEFAULT_BUDGET).unwrap();
                assert_eq!(d, brute_delta(&spec, &t, k));
                let (rho, rho_prime, gap) = min_gap_pair(&spec, &t, k, DEFAULT_BUDGET).unwrap();
                let diff = compose_projected(&spec, &t, &rho).unwrap()
                    - compose_projected(&spec, &t, &rho_prime).unwrap();
                assert_eq!(num_traits::Signed::abs(&diff), gap);
            }
        }
    }

    #[test]
    fn linear_form_examples() {
        let spec = CarpetSpec::new(3, 4, [(1, 1), (2, 1)]).unwrap();
        let c = linear_form(&spec, &Word(vec![1, 2]), &Word(vec![2, 1])).unwrap();
        assert_eq!(c[&1], ratio(2, 3));
        assert_eq!(c[&2], ratio(-2, 3));
        let c = linear_form(&spec, &Word(vec![1]), &Word(vec![2])).unwrap();
        assert_eq!((c[&1].clone(), c[&2].clone()), (int(1), int(-1)));
        assert!(linear_form(&spec, &Word(vec![1]), &Word(vec![1, 2])).is_err());
        assert!(linear_form(&spec, &Word(vec![1]), &Word(vec![1])).is_err());
        assert!(linear_form(&spec, &Word(vec![3]), &Word(vec![1])).is_err());
    }
}
