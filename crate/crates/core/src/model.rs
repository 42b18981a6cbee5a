//! Carpet IFS model: the grid system, its column structure, translated
//! columns, the generalized (a, b, w_ij) system, and symbolic compositions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{format_rational, int, ratio, Rational};

/// Grid rectangle `(i, j)`, 1-based: column `i`, row `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Rect {
    pub i: u32,
    pub j: u32,
}

impl Rect {
    pub fn new(i: u32, j: u32) -> Self {
        Rect { i, j }
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// A word over the occupied columns (a projected code).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Word(pub Vec<u32>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u32] {
        &self.0
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }
}

impl From<Vec<u32>> for Word {
    fn from(v: Vec<u32>) -> Self {
        Word(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

/// A Bedford–McMullen pattern: an `m × n` grid (`n > m > 1`) and the chosen
/// rectangles, with the derived column structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarpetSpec {
    m: u32,
    n: u32,
    rects: Vec<Rect>,
    /// occupied column -> sorted rows
    columns: BTreeMap<u32, Vec<u32>>,
}

impl CarpetSpec {
    pub fn new(m: u32, n: u32, rects: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        if m < 2 {
            return Err(Error::invariant("m must be at least 2"));
        }
        if n <= m {
            return Err(Error::invariant("n must exceed m"));
        }
        let mut set = BTreeSet::new();
        for (i, j) in rects {
            if !(1..=m).contains(&i) || !(1..=n).contains(&j) {
                return Err(Error::invariant(format!(
                    "rectangle ({i},{j}) lies outside the {m}x{n} grid"
                )));
            }
            if !set.insert(Rect::new(i, j)) {
                return Err(Error::invariant(format!("duplicate rectangle ({i},{j})")));
            }
        }
        if set.is_empty() {
            return Err(Error::invariant("rects must be non-empty"));
        }
        let rects: Vec<Rect> = set.into_iter().collect();
        let mut columns: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for r in &rects {
            columns.entry(r.i).or_default().push(r.j);
        }
        Ok(CarpetSpec {
            m,
            n,
            rects,
            columns,
        })
    }

    /// The full `m × n` grid.
    pub fn full_grid(m: u32, n: u32) -> Result<Self> {
        CarpetSpec::new(m, n, (1..=m).flat_map(|i| (1..=n).map(move |j| (i, j))))
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Chosen rectangles in lexicographic order.
    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    /// `|D|`
    pub fn num_rects(&self) -> usize {
        self.rects.len()
    }

    /// Occupied columns `D̄`, ascending.
    pub fn columns(&self) -> Vec<u32> {
        self.columns.keys().copied().collect()
    }

    /// `|D̄|`
    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// Rows chosen in column `i` (empty if unoccupied).
    pub fn fibre(&self, i: u32) -> &[u32] {
        self.columns.get(&i).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `N_i`
    pub fn column_count(&self, i: u32) -> usize {
        self.fibre(i).len()
    }

    /// `N_i` for every occupied column, in column order.
    pub fn fibre_counts(&self) -> Vec<usize> {
        self.columns.values().map(Vec::len).collect()
    }

    pub fn has_uniform_fibres(&self) -> bool {
        let counts = self.fibre_counts();
        counts.windows(2).all(|w| w[0] == w[1])
    }

    pub fn is_column(&self, i: u32) -> bool {
        self.columns.contains_key(&i)
    }

    /// Embeds the grid system as `a = 1/m`, `b = 1/n`, `w_ij = (j-1)/n`,
    /// keeping only occupied columns.
    pub fn to_general(&self, t: &TranslationVector) -> (GeneralCarpetSpec, Vec<Rational>) {
        let n = i64::from(self.n);
        let columns = self
            .columns
            .values()
            .map(|rows| rows.iter().map(|&j| ratio(i64::from(j) - 1, n)).collect())
            .collect();
        let spec = GeneralCarpetSpec {
            a: ratio(1, i64::from(self.m)),
            b: ratio(1, n),
            wide: false,
            columns,
        };
        (spec, t.values().cloned().collect())
    }
}

/// Horizontal offsets `t_i`, one per occupied column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationVector {
    entries: BTreeMap<u32, Rational>,
}

impl TranslationVector {
    /// Validates that the domain is exactly `D̄` and `0 <= t_i <= 1 - 1/m`.
    pub fn new(spec: &CarpetSpec, entries: BTreeMap<u32, Rational>) -> Result<Self> {
        let domain: Vec<u32> = entries.keys().copied().collect();
        if domain != spec.columns() {
            return Err(Error::invariant(format!(
                "translations must be given exactly for the occupied columns {:?}, got {:?}",
                spec.columns(),
                domain
            )));
        }
        let upper = Rational::one() - ratio(1, i64::from(spec.m()));
        for (i, t) in &entries {
            if *t < Rational::zero() || *t > upper {
                return Err(Error::invariant(format!(
                    "translation t_{i} = {} outside [0, {}]",
                    format_rational(t),
                    format_rational(&upper)
                )));
            }
        }
        Ok(TranslationVector { entries })
    }

    /// Builds from values listed in ascending column order.
    pub fn from_values(spec: &CarpetSpec, values: Vec<Rational>) -> Result<Self> {
        let cols = spec.columns();
        if values.len() != cols.len() {
            return Err(Error::invariant(format!(
                "expected {} translations (one per occupied column), got {}",
                cols.len(),
                values.len()
            )));
        }
        TranslationVector::new(spec, cols.into_iter().zip(values).collect())
    }

    /// `t_i = (i-1)/m`, the unperturbed carpet.
    pub fn standard(spec: &CarpetSpec) -> Self {
        let m = i64::from(spec.m());
        let entries = spec
            .columns()
            .into_iter()
            .map(|i| (i, ratio(i64::from(i) - 1, m)))
            .collect();
        TranslationVector { entries }
    }

    pub fn get(&self, i: u32) -> Option<&Rational> {
        self.entries.get(&i)
    }

    /// Values in ascending column order.
    pub fn values(&self) -> impl Iterator<Item = &Rational> {
        self.entries.values()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Rational)> {
        self.entries.iter().map(|(i, t)| (*i, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_standard(&self, spec: &CarpetSpec) -> bool {
        *self == TranslationVector::standard(spec)
    }

    /// True when two columns share a translation.
    pub fn has_duplicates(&self) -> bool {
        let distinct: BTreeSet<&Rational> = self.entries.values().collect();
        distinct.len() < self.entries.len()
    }
}

/// `S̄_ρ(0) = Σ_j t_{i_j} m^{-(j-1)}`, exactly.
pub fn compose_projected(
    spec: &CarpetSpec,
    t: &TranslationVector,
    word: &Word,
) -> Result<Rational> {
    if word.is_empty() {
        return Err(Error::invalid("projected word must be non-empty"));
    }
    let m = BigInt::from(spec.m());
    let mut scale = Rational::one();
    let mut acc = Rational::zero();
    for &i in word.symbols() {
        let ti = t
            .get(i)
            .ok_or_else(|| Error::invalid(format!("symbol {i} is not an occupied column")))?;
        acc += ti * &scale;
        scale /= &m;
    }
    Ok(acc)
}

/// `S_λ(0,0)` for a word of rectangles, as an exact point.
pub fn compose(
    spec: &CarpetSpec,
    t: &TranslationVector,
    word: &[Rect],
) -> Result<(Rational, Rational)> {
    let (m, n) = (BigInt::from(spec.m()), BigInt::from(spec.n()));
    let mut sx = Rational::one();
    let mut sy = Rational::one();
    let (mut x, mut y) = (Rational::zero(), Rational::zero());
    for r in word {
        if !spec.fibre(r.i).contains(&r.j) {
            return Err(Error::invalid(format!("{r} is not a chosen rectangle")));
        }
        let ti = t
            .get(r.i)
            .expect("translation domain equals occupied columns");
        x += ti * &sx;
        sy /= &n;
        y += int(i64::from(r.j) - 1) * &sy;
        sx /= &m;
    }
    Ok((x, y))
}

/// Collapses columns sharing a translation into one column whose rows are the
/// union of theirs. The merged column keeps the smallest index. Returns the
/// inputs unchanged when all translations are distinct.
pub fn merge_equal_columns(
    spec: &CarpetSpec,
    t: &TranslationVector,
) -> (CarpetSpec, TranslationVector) {
    if !t.has_duplicates() {
        return (spec.clone(), t.clone());
    }
    let mut by_offset: BTreeMap<&Rational, u32> = BTreeMap::new();
    let mut rows: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for (i, ti) in t.iter() {
        let target = *by_offset.entry(ti).or_insert(i);
        rows.entry(target).or_default().extend(spec.fibre(i));
    }
    let rects = rows
        .iter()
        .flat_map(|(&i, js)| js.iter().map(move |&j| (i, j)));
    let merged =
        CarpetSpec::new(spec.m(), spec.n(), rects).expect("merging preserves the grid invariants");
    let entries = rows
        .keys()
        .map(|&i| (i, t.get(i).expect("kept column").clone()))
        .collect();
    (merged, TranslationVector { entries })
}

/// Generalized carpet: contractions `a > b`, free row heights `w_ij` inside
/// each column. With `wide` set, `a < 1` and more than `1/a` columns are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralCarpetSpec {
    a: Rational,
    b: Rational,
    wide: bool,
    columns: Vec<Vec<Rational>>,
}

impl GeneralCarpetSpec {
    pub fn new(a: Rational, b: Rational, wide: bool, columns: Vec<Vec<Rational>>) -> Result<Self> {
        let zero = Rational::zero();
        let one = Rational::one();
        if b <= zero || b >= a {
            return Err(Error::invariant("contractions must satisfy 0 < b < a"));
        }
        if a >= one {
            return Err(Error::invariant("a must be below 1"));
        }
        if columns.is_empty() {
            return Err(Error::invariant("at least one column is required"));
        }
        if !wide {
            if a > ratio(1, 2) {
                return Err(Error::invariant(
                    "a must not exceed 1/2 unless `wide` is set",
                ));
            }
            let max_cols = crate::rational::floor(&(one.clone() / &a));
            if BigInt::from(columns.len()) > max_cols {
                return Err(Error::invariant(format!(
                    "{} columns exceed floor(1/a) = {max_cols}; set `wide` for the m > 1/a variant",
                    columns.len()
                )));
            }
        }
        let top = &one - &b;
        for (c, heights) in columns.iter().enumerate() {
            if heights.is_empty() {
                return Err(Error::invariant(format!(
                    "column {} has no rectangles",
                    c + 1
                )));
            }
            for w in heights {
                if *w < zero || *w > top {
                    return Err(Error::invariant(format!(
                        "height {} in column {} outside [0, 1-b]",
                        format_rational(w),
                        c + 1
                    )));
                }
            }
            let mut sorted: Vec<&Rational> = heights.iter().collect();
            sorted.sort();
            for pair in sorted.windows(2) {
                if pair[1] - pair[0] < b {
                    return Err(Error::invariant(format!(
                        "column heights overlap: |w-w'| < b in column {} ({} and {})",
                        c + 1,
                        format_rational(pair[0]),
                        format_rational(pair[1])
                    )));
                }
            }
        }
        Ok(GeneralCarpetSpec {
            a,
            b,
            wide,
            columns,
        })
    }

    pub fn a(&self) -> &Rational {
        &self.a
    }

    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn wide(&self) -> bool {
        self.wide
    }

    pub fn columns(&self) -> &[Vec<Rational>] {
        &self.columns
    }

    /// `N_i` per column.
    pub fn fibre_counts(&self) -> Vec<usize> {
        self.columns.iter().map(Vec::len).collect()
    }

    /// Checks `t ∈ [0, 1-a]^m`.
    pub fn check_translations(&self, t: &[Rational]) -> Result<()> {
        if t.len() != self.columns.len() {
            return Err(Error::invariant(format!(
                "expected {} column translations, got {}",
                self.columns.len(),
                t.len()
            )));
        }
        let upper = Rational::one() - &self.a;
        for (c, ti) in t.iter().enumerate() {
            if *ti < Rational::zero() || *ti > upper {
                return Err(Error::invariant(format!(
                    "translation of column {} outside [0, 1-a]",
                    c + 1
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> CarpetSpec {
        CarpetSpec::new(3, 5, [(1, 1), (2, 1), (2, 3), (3, 1), (3, 3), (3, 5)]).unwrap()
    }

    #[test]
    fn column_structure_is_derived() {
        let s = example();
        assert_eq!(s.fibre_counts(), vec![1, 2, 3]);
        assert_eq!(s.num_rects(), 6);
        assert_eq!(s.columns(), vec![1, 2, 3]);
        assert_eq!(s.fibre(3), &[1, 3, 5]);
        assert!(!s.has_uniform_fibres());
    }

    #[test]
    fn invariant_violations() {
        let e = CarpetSpec::new(3, 3, [(1, 1)]).unwrap_err();
        assert!(e.to_string().contains("n must exceed m"));
        assert!(CarpetSpec::new(1, 3, [(1, 1)]).is_err());
        assert!(CarpetSpec::new(2, 3, Vec::<(u32, u32)>::new()).is_err());
        assert!(CarpetSpec::new(2, 3, [(1, 1), (1, 1)]).is_err());
        assert!(CarpetSpec::new(2, 3, [(3, 1)]).is_err());
        assert!(CarpetSpec::new(2, 3, [(1, 0)]).is_err());
    }

    #[test]
    fn standard_translations_are_grid_aligned() {
        let full = CarpetSpec::full_grid(3, 4).unwrap();
        let t = TranslationVector::standard(&full);
        assert_eq!(
            t.values().cloned().collect::<Vec<_>>(),
            vec![int(0), ratio(1, 3), ratio(2, 3)]
        );

        let sparse = CarpetSpec::new(4, 5, [(1, 2), (3, 1)]).unwrap();
        let t = TranslationVector::standard(&sparse);
        assert_eq!(t.get(3), Some(&ratio(1, 2)));

        let single = CarpetSpec::new(6, 7, [(2, 2)]).unwrap();
        assert_eq!(
            TranslationVector::standard(&single).get(2),
            Some(&ratio(1, 6))
        );
    }

    #[test]
    fn translation_bounds_and_domain() {
        let s = example();
        assert!(TranslationVector::from_values(&s, vec![int(0), int(0)]).is_err());
        assert!(TranslationVector::from_values(&s, vec![int(0), ratio(3, 4), int(0)]).is_err());
        assert!(
            TranslationVector::from_values(&s, vec![int(0), ratio(2, 3), ratio(-1, 9)]).is_err()
        );
        assert!(TranslationVector::from_values(&s, vec![int(0), ratio(2, 3), ratio(2, 3)]).is_ok());
    }

    #[test]
    fn projected_compositions() {
        let s = example();
        let t = TranslationVector::standard(&s);
        assert_eq!(
            compose_projected(&s, &t, &Word(vec![2, 3])).unwrap(),
            ratio(5, 9)
        );
        assert_eq!(
            compose_projected(&s, &t, &Word(vec![3])).unwrap(),
            ratio(2, 3)
        );
        assert!(compose_projected(&s, &t, &Word(vec![])).is_err());
        assert!(compose_projected(&s, &t, &Word(vec![4])).is_err());

        let s4 = CarpetSpec::new(4, 5, [(1, 1), (2, 1), (3, 1)]).unwrap();
        let t4 =
            TranslationVector::from_values(&s4, vec![int(0), ratio(1, 4), ratio(5, 16)]).unwrap();
        let a = compose_projected(&s4, &t4, &Word(vec![3, 1])).unwrap();
        let b = compose_projected(&s4, &t4, &Word(vec![2, 2])).unwrap();
        assert_eq!(a, ratio(5, 16));
        assert_eq!(a, b);
    }

    #[test]
    fn full_compositions() {
        let s = example();
        let t = TranslationVector::standard(&s);
        let (x, y) = compose(&s, &t, &[Rect::new(2, 3), Rect::new(3, 5)]).unwrap();
        assert_eq!(x, ratio(5, 9));
        assert_eq!(y, ratio(2, 5) + ratio(4, 25));
        assert!(compose(&s, &t, &[Rect::new(1, 2)]).is_err());
    }

    #[test]
    fn merging_columns() {
        // columns 1 and 2 have disjoint rows
        let s = CarpetSpec::new(3, 5, [(1, 2), (2, 1), (2, 3), (3, 1), (3, 3), (3, 5)]).unwrap();
        let t = TranslationVector::from_values(&s, vec![ratio(1, 3), ratio(1, 3), ratio(2, 3)])
            .unwrap();
        let (ms, mt) = merge_equal_columns(&s, &t);
        assert_eq!(ms.fibre_counts(), vec![3, 3]);
        assert_eq!(ms.num_columns(), 2);
        assert_eq!(
            mt.values().cloned().collect::<Vec<_>>(),
            vec![ratio(1, 3), ratio(2, 3)]
        );

        let std = TranslationVector::standard(&s);
        assert_eq!(merge_equal_columns(&s, &std), (s.clone(), std));

        let same_rows = CarpetSpec::new(3, 4, [(1, 1), (1, 3), (2, 1), (2, 3)]).unwrap();
        let t = TranslationVector::from_values(&same_rows, vec![int(0), int(0)]).unwrap();
        let (ms, _) = merge_equal_columns(&same_rows, &t);
        assert_eq!(ms.fibre_counts(), vec![2]);
    }

    #[test]
    fn general_spec_validation() {
        let e = GeneralCarpetSpec::new(
            ratio(1, 4),
            ratio(1, 6),
            false,
            vec![vec![int(0), ratio(1, 12)]],
        )
        .unwrap_err();
        assert!(e.to_string().contains("column heights overlap"));
        assert!(
            GeneralCarpetSpec::new(ratio(1, 4), ratio(1, 3), false, vec![vec![int(0)]]).is_err()
        );
        assert!(
            GeneralCarpetSpec::new(ratio(2, 3), ratio(1, 3), false, vec![vec![int(0)]]).is_err()
        );
        assert!(GeneralCarpetSpec::new(ratio(2, 3), ratio(1, 3), true, vec![vec![int(0)]]).is_ok());
        let five = vec![vec![int(0)]; 5];
        assert!(GeneralCarpetSpec::new(ratio(1, 4), ratio(1, 6), false, five.clone()).is_err());
        assert!(GeneralCarpetSpec::new(ratio(1, 4), ratio(1, 6), true, five).is_ok());
        assert!(
            GeneralCarpetSpec::new(ratio(1, 4), ratio(1, 6), false, vec![vec![ratio(5, 6)]])
                .is_ok()
        );
        assert!(
            GeneralCarpetSpec::new(ratio(1, 4), ratio(1, 6), false, vec![vec![ratio(6, 7)]])
                .is_err()
        );
    }

    #[test]
    fn embedding_into_general() {
        let s = example();
        let t = TranslationVector::standard(&s);
        let (g, gt) = s.to_general(&t);
        assert_eq!(g.a(), &ratio(1, 3));
        assert_eq!(g.b(), &ratio(1, 5));
        assert_eq!(g.fibre_counts(), vec![1, 2, 3]);
        assert_eq!(g.columns()[2], vec![int(0), ratio(2, 5), ratio(4, 5)]);
        assert_eq!(gt.len(), 3);
        // the embedding satisfies the generalized invariants
        GeneralCarpetSpec::new(g.a().clone(), g.b().clone(), false, g.columns().to_vec()).unwrap();
        g.check_translations(&gt).unwrap();
    }

    fn translated_words() -> impl Strategy<Value = (u32, Vec<u32>, Vec<u32>, Vec<u32>)> {
        (2u32..6).prop_flat_map(|m| {
            (
                Just(m),
                proptest::collection::vec(0u32..=(m - 1) * 4, m as usize),
                proptest::collection::vec(1u32..=m, 0..6),
                proptest::collection::vec(1u32..=m, 1..6),
            )
        })
    }

    proptest! {
        #[test]
        fn concatenation_rule((m, nums, prefix, suffix) in translated_words()) {
            let spec = CarpetSpec::new(m, m + 1, (1..=m).map(|i| (i, 1))).unwrap();
            let values = nums.iter().map(|&v| ratio(i64::from(v), 4 * i64::from(m))).collect();
            let t = TranslationVector::from_values(&spec, values).unwrap();
            let rho = Word(prefix);
            let sigma = Word(suffix);
            let whole = compose_projected(&spec, &t, &rho.concat(&sigma)).unwrap();
            let head = if rho.is_empty() {
                Rational::zero()
            } else {
                compose_projected(&spec, &t, &rho).unwrap()
            };
            let scale = Rational::new(BigInt::one(), num_traits::pow(BigInt::from(m), rho.len()));
            prop_assert_eq!(whole, head + scale * compose_projected(&spec, &t, &sigma).unwrap());
        }

        #[test]
        fn merge_is_idempotent_and_never_grows(
            m in 2u32..5,
            mask in proptest::collection::vec(any::<bool>(), 20),
            offs in proptest::collection::vec(0u32..3, 5),
        ) {
            let n = m + 2;
            let rects: Vec<(u32, u32)> = (1..=m)
                .flat_map(|i| (1..=n).map(move |j| (i, j)))
                .zip(mask.iter().cycle())
                .filter(|(_, keep)| **keep)
                .map(|(r, _)| r)
                .collect();
            prop_assume!(!rects.is_empty());
            let spec = CarpetSpec::new(m, n, rects).unwrap();
            let values = spec
                .columns()
                .iter()
                .enumerate()
                .map(|(k, _)| ratio(i64::from(offs[k % offs.len()]), i64::from(m) * 3))
                .collect();
            let t = TranslationVector::from_values(&spec, values).unwrap();
            let (ms, mt) = merge_equal_columns(&spec, &t);
            prop_assert!(ms.num_rects() <= spec.num_rects());
            prop_assert!(!mt.has_duplicates());
            let again = merge_equal_columns(&ms, &mt);
            prop_assert_eq!(again, (ms, mt));
        }
    }
}
