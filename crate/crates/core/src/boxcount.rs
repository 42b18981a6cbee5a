//! Grid box-counting of `F_t` and `π(F_t)` on scales `r = n^{-ℓ}`, slope
//! estimation, and the disjoint-subsystem lower-bound construction.
//!
//! Cells are half-open `[c·r, (c+1)·r)`, except that the last row and column
//! are closed so `[0,1]²` is covered exactly; rectangles are closed.
//!
//! A depth-`L` rectangle is split into a length-`ℓ` prefix, which fixes its
//! grid row, and a length-`L-ℓ` suffix, which only moves it horizontally.
//! Prefixes are deduplicated on `(row, x-numerator)`, so coincident
//! rectangles from overlapping columns collapse before any cell is touched.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dims::box_packing_dim;
use crate::error::{check_budget, Error, Result};
use crate::model::{CarpetSpec, TranslationVector, Word};
use crate::rational::{lcm_of_denominators, pow_u, Rational};

/// Cap on sample words per count; above it a seeded subsample is drawn.
pub const SAMPLE_CAP: u64 = 1 << 21;
pub const SAMPLE_SEED: u64 = 0x5eed_ca7e;
/// Extra sampling depth beyond the cover depth.
pub const SAMPLE_EXTRA_DEPTH: u32 = 4;
/// Relative change in cover count below which refinement stops.
pub const REFINE_TOLERANCE: f64 = 0.005;
pub const MAX_REFINE_STEPS: u32 = 6;

fn overflow() -> Error {
    Error::invalid("grid coordinates exceed 128 bits at this level; lower the level or depth")
}

fn pow128(base: u128, exp: u32) -> Result<u128> {
    base.checked_pow(exp).ok_or_else(overflow)
}

/// Translations over a common denominator `q`, plus the rectangle list by
/// column position.
struct Grid {
    m: u128,
    n: u128,
    q: u128,
    /// `t_i·q` per occupied column, ascending column order
    tnum: Vec<u128>,
    cols: Vec<u32>,
    /// (column position, j)
    rects: Vec<(usize, u32)>,
    /// positions of columns containing row `n`
    top: Vec<usize>,
}

impl Grid {
    fn new(spec: &CarpetSpec, t: &TranslationVector) -> Result<Self> {
        let q = lcm_of_denominators(t.values());
        let qi = BigInt::from(q.clone());
        let tnum = t
            .values()
            .map(|v| {
                (v * Rational::from_integer(qi.clone()))
                    .to_integer()
                    .to_u128()
                    .ok_or_else(overflow)
            })
            .collect::<Result<Vec<_>>>()?;
        let cols: Vec<u32> = t.iter().map(|(i, _)| i).collect();
        let pos = |i: u32| cols.iter().position(|&c| c == i).expect("occupied column");
        let rects = spec.rects().iter().map(|r| (pos(r.i), r.j)).collect();
        let top = cols
            .iter()
            .enumerate()
            .filter(|(_, i)| spec.fibre(**i).contains(&spec.n()))
            .map(|(p, _)| p)
            .collect();
        Ok(Grid {
            m: u128::from(spec.m()),
            n: u128::from(spec.n()),
            q: q.to_u128().ok_or_else(overflow)?,
            tnum,
            cols,
            rects,
            top,
        })
    }

    /// Sorted distinct level-`e` numerators over `q·m^{e-1}` using only the
    /// given columns; `{0}` at `e = 0`.
    fn suffix_points(&self, positions: &[usize], e: u32, budget: u64) -> Result<Vec<u128>> {
        let mut pts = vec![0u128];
        for _ in 0..e {
            check_budget(pts.len() as u128 * positions.len() as u128, budget)?;
            let mut next: Vec<u128> = pts
                .iter()
                .flat_map(|&v| positions.iter().map(move |&p| (v, p)))
                .map(|(v, p)| v * self.m + self.tnum[p])
                .collect();
            next.par_sort_unstable();
            next.dedup();
            pts = next;
        }
        Ok(pts)
    }

    /// Distinct `(row, x-numerator)` over all length-`level` rectangle words.
    fn prefix_states(&self, level: u32, budget: u64) -> Result<Vec<(u64, u128)>> {
        let mut states: Vec<(u64, u128)> = vec![(0, 0)];
        for _ in 0..level {
            check_budget(states.len() as u128 * self.rects.len() as u128, budget)?;
            let n = self.n as u64;
            let mut next: Vec<(u64, u128)> = states
                .par_iter()
                .flat_map_iter(|&(r, x)| {
                    self.rects
                        .iter()
                        .map(move |&(p, j)| (r * n + u64::from(j - 1), x * self.m + self.tnum[p]))
                })
                .collect();
            next.par_sort_unstable();
            next.dedup();
            states = next;
        }
        Ok(states)
    }

    /// Cells at level `level` met by the closed depth-`(level+extra)`
    /// rectangles below the given prefix states.
    fn cells(
        &self,
        level: u32,
        states: &[(u64, u128)],
        extra: u32,
        budget: u64,
    ) -> Result<CellSet> {
        let side = self
            .n
            .checked_pow(level)
            .filter(|&s| s <= u128::from(u64::MAX))
            .ok_or_else(overflow)?;
        let all: Vec<usize> = (0..self.cols.len()).collect();
        let p_all = self.suffix_points(&all, extra, budget)?;
        let p_top = self.suffix_points(&self.top, extra, budget)?;
        check_budget(
            states.len() as u128 * (p_all.len() + p_top.len()) as u128,
            budget,
        )?;

        let den = self
            .q
            .checked_mul(pow128(self.m, level + extra)?)
            .ok_or_else(overflow)?;
        den.checked_mul(side).ok_or_else(overflow)?;
        let me = pow128(self.m, extra)?;
        let (m, q) = (self.m, self.q);
        let columns_for = |base: u128, suffixes: &[u128], out: &mut Vec<(u64, u64)>| {
            let mut cur: Option<(u64, u64)> = None;
            for &p in suffixes {
                let a = m * (base + p);
                let lo = (a * side / den) as u64;
                let hi = (((a + q) * side / den).min(side - 1)) as u64;
                cur = match cur {
                    Some((l, h)) if lo <= h + 1 => Some((l, h.max(hi))),
                    Some(done) => {
                        out.push(done);
                        Some((lo, hi))
                    }
                    None => Some((lo, hi)),
                };
            }
            out.extend(cur);
        };

        let mut spans: Vec<(u64, u64, u64)> = states
            .par_iter()
            .flat_map_iter(|&(row, x)| {
                let base = x * me;
                let mut out = Vec::new();
                let mut ranges = Vec::new();
                columns_for(base, &p_all, &mut ranges);
                out.extend(ranges.drain(..).map(|(l, h)| (row, l, h)));
                if u128::from(row) + 1 < side {
                    columns_for(base, &p_top, &mut ranges);
                    out.extend(ranges.drain(..).map(|(l, h)| (row + 1, l, h)));
                }
                out
            })
            .collect();
        spans.par_sort_unstable();
        Ok(CellSet::from_sorted_spans(level, side as u64, &spans))
    }
}

/// Occupied cells of one grid level, as merged column ranges per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    level: u32,
    side: u64,
    rows: BTreeMap<u64, Vec<(u64, u64)>>,
}

impl CellSet {
    fn from_sorted_spans(level: u32, side: u64, spans: &[(u64, u64, u64)]) -> Self {
        let mut rows: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
        for &(row, lo, hi) in spans {
            let ranges = rows.entry(row).or_default();
            match ranges.last_mut() {
                Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
                _ => ranges.push((lo, hi)),
            }
        }
        CellSet { level, side, rows }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cells per axis, `n^ℓ`.
    pub fn side(&self) -> u64 {
        self.side
    }

    pub fn count(&self) -> u64 {
        self.rows
            .values()
            .flat_map(|r| r.iter().map(|(lo, hi)| hi - lo + 1))
            .sum()
    }

    /// Inclusive column ranges per occupied row (row 0 at the bottom).
    pub fn rows(&self) -> impl Iterator<Item = (u64, &[(u64, u64)])> {
        self.rows.iter().map(|(r, v)| (*r, v.as_slice()))
    }

    pub fn contains(&self, row: u64, col: u64) -> bool {
        self.rows
            .get(&row)
            .is_some_and(|ranges| ranges.iter().any(|&(lo, hi)| lo <= col && col <= hi))
    }
}

fn check_levels(level: u32, depth: u32) -> Result<()> {
    if depth < level {
        return Err(Error::invalid(format!(
            "cover depth L = {depth} is below the level {level}"
        )));
    }
    Ok(())
}

/// Cells of the `n^{-ℓ}` grid meeting the depth-`L` rectangle cover.
pub fn cover_cells(
    spec: &CarpetSpec,
    t: &TranslationVector,
    level: u32,
    depth: u32,
    budget: u64,
) -> Result<CellSet> {
    check_levels(level, depth)?;
    let grid = Grid::new(spec, t)?;
    let states = grid.prefix_states(level, budget)?;
    grid.cells(level, &states, depth - level, budget)
}

/// Sorted distinct `(row, col)` cells hit by attractor points `S_λ(p*)`,
/// `|λ| = K`, where `p*` is the fixed point of the first map.
pub fn sample_cells(
    spec: &CarpetSpec,
    t: &TranslationVector,
    level: u32,
    word_len: u32,
    budget: u64,
) -> Result<Vec<(u64, u64)>> {
    let g = Grid::new(spec, t)?;
    let side =
        g.n.checked_pow(level)
            .filter(|&s| s <= u128::from(u64::MAX))
            .ok_or_else(overflow)?;
    let k = word_len;
    // x = m((m-1)V + T*) / (q m^K (m-1)),  y = ((n-1)Y + j*-1) / (n^K (n-1))
    let dx =
        g.q.checked_mul(pow128(g.m, k)?)
            .and_then(|v| v.checked_mul(g.m - 1))
            .ok_or_else(overflow)?;
    dx.checked_mul(side).ok_or_else(overflow)?;
    let row_div = pow128(g.n, k - level.min(k))?
        .checked_mul(g.n - 1)
        .ok_or_else(overflow)?;
    let (p0, j0) = g.rects[0];
    let t_star = g.tnum[p0];
    let j_star = u128::from(j0 - 1);

    let cell_of = |word: &mut dyn Iterator<Item = usize>| -> (u64, u64) {
        let (mut v, mut y) = (0u128, 0u128);
        for r in word {
            let (p, j) = g.rects[r];
            v = v * g.m + g.tnum[p];
            y = y * g.n + u128::from(j - 1);
        }
        let nx = g.m * ((g.m - 1) * v + t_star);
        let col = (nx * side / dx).min(side - 1);
        let ny = (g.n - 1) * y + j_star;
        let row = (ny / row_div).min(side - 1);
        (row as u64, col as u64)
    };

    let d = g.rects.len() as u128;
    let total = d.checked_pow(k).unwrap_or(u128::MAX);
    let cap = u128::from(budget.min(SAMPLE_CAP));
    let mut cells: Vec<(u64, u64)> = if total <= cap {
        (0..total as u64)
            .into_par_iter()
            .map(|mut idx| {
                let mut digits = vec![0usize; k as usize];
                for slot in digits.iter_mut().rev() {
                    *slot = (idx % d as u64) as usize;
                    idx /= d as u64;
                }
                cell_of(&mut digits.into_iter())
            })
            .collect()
    } else {
        const CHUNK: u64 = 1 << 14;
        let chunks = (cap as u64).div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(SAMPLE_SEED ^ c.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let count = CHUNK.min(cap as u64 - c * CHUNK);
                (0..count)
                    .map(|_| {
                        let mut it = (0..k).map(|_| rng.random_range(0..d as usize));
                        cell_of(&mut it)
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    cells.par_sort_unstable();
    cells.dedup();
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCount {
    pub level: u32,
    #[serde(serialize_with = "serialize_rational")]
    pub r: Rational,
    pub cover_count: u64,
    pub sample_count: u64,
    pub cover_depth: u32,
}

fn serialize_rational<S: serde::Serializer>(
    r: &Rational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&crate::rational::format_rational(r))
}

/// Cover and sample counts at `r = n^{-ℓ}` with cover depth `L`.
pub fn grid_count(
    spec: &CarpetSpec,
    t: &TranslationVector,
    level: u32,
    depth: u32,
    budget: u64,
) -> Result<GridCount> {
    let cover = cover_cells(spec, t, level, depth, budget)?;
    let samples = sample_cells(spec, t, level, depth + SAMPLE_EXTRA_DEPTH, budget)?;
    Ok(GridCount {
        level,
        r: Rational::new(1.into(), BigInt::from(pow_u(u64::from(spec.n()), level))),
        cover_count: cover.count(),
        sample_count: samples.len() as u64,
        cover_depth: depth,
    })
}

/// Cells of size `r` (the grid anchored at 0, last cell closed at 1) meeting
/// the closed intervals `S̄_ρ([0,1])`, `ρ ∈ D̄^depth`.
pub fn projected_cells_at(
    spec: &CarpetSpec,
    t: &TranslationVector,
    depth: u32,
    r: &Rational,
    budget: u64,
) -> Result<u64> {
    if *r <= Rational::from_integer(0.into()) {
        return Err(Error::invalid("cell size must be positive"));
    }
    let g = Grid::new(spec, t)?;
    let all: Vec<usize> = (0..g.cols.len()).collect();
    let pts = g.suffix_points(&all, depth, budget)?;
    let (rn, rd) = (
        r.numer().to_u128().ok_or_else(overflow)?,
        r.denom().to_u128().ok_or_else(overflow)?,
    );
    // x = A / (q m^depth) with A = m·V; index = floor(x / r)
    let unit = g.q.checked_mul(pow128(g.m, depth)?).ok_or_else(overflow)?;
    let den = unit.checked_mul(rn).ok_or_else(overflow)?;
    unit.checked_mul(rd).ok_or_else(overflow)?;
    let last = rd.div_ceil(rn) - 1;
    let (step, width) = if depth == 0 { (0, unit) } else { (g.m, g.q) };
    let mut count = 0u64;
    let mut cur: Option<(u128, u128)> = None;
    for &v in &pts {
        let a = step * v;
        let lo = (a * rd / den).min(last);
        let hi = ((a + width) * rd / den).min(last);
        cur = match cur {
            Some((l, h)) if lo <= h + 1 => Some((l, h.max(hi))),
            Some((l, h)) => {
                count += (h - l + 1) as u64;
                Some((lo, hi))
            }
            None => Some((lo, hi)),
        };
    }
    if let Some((l, h)) = cur {
        count += (h - l + 1) as u64;
    }
    Ok(count)
}

/// Cells of size `m^{-ℓ'}` meeting the level-`ℓ'` interval cover of `π(F_t)`.
pub fn projected_count(
    spec: &CarpetSpec,
    t: &TranslationVector,
    level: u32,
    budget: u64,
) -> Result<u64> {
    let r = Rational::new(1.into(), BigInt::from(pow_u(u64::from(spec.m()), level)));
    projected_cells_at(spec, t, level, &r, budget)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDimEstimate {
    pub levels: Vec<GridCount>,
    pub slope: f64,
    pub stderr: f64,
    /// Packing dimension equals upper box dimension here, so this is `slope`.
    pub packing_slope: f64,
    pub formula_value: f64,
}

/// Least-squares slope and its standard error.
pub fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    let stderr = if points.len() > 2 {
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, stderr)
}

/// Fits `log cover_count` against `ℓ log n` for `ℓ ∈ [ℓ_min, ℓ_max]` with
/// `L = ℓ + L_extra`. With `refine`, `L` keeps growing until the count moves
/// by less than [`REFINE_TOLERANCE`] or the budget stops it.
pub fn estimate_box_dim(
    spec: &CarpetSpec,
    t: &TranslationVector,
    l_min: u32,
    l_max: u32,
    l_extra: u32,
    refine: bool,
    budget: u64,
) -> Result<BoxDimEstimate> {
    if l_min < 2 {
        return Err(Error::invalid("l_min must be at least 2"));
    }
    if l_max < l_min + 2 {
        return Err(Error::invalid("l_max must be at least l_min + 2"));
    }
    let mut levels = Vec::new();
    for level in l_min..=l_max {
        let mut depth = level + l_extra;
        let mut cover = cover_cells(spec, t, level, depth, budget)?.count();
        if refine {
            for _ in 0..MAX_REFINE_STEPS {
                let Ok(next) = cover_cells(spec, t, level, depth + 1, budget) else {
                    break;
                };
                let next = next.count();
                let change = (cover as f64 - next as f64).abs() / cover as f64;
                depth += 1;
                cover = next;
                if change < REFINE_TOLERANCE {
                    break;
                }
            }
        }
        let samples = sample_cells(spec, t, level, depth + SAMPLE_EXTRA_DEPTH, budget)?;
        levels.push(GridCount {
            level,
            r: Rational::new(1.into(), BigInt::from(pow_u(u64::from(spec.n()), level))),
            cover_count: cover,
            sample_count: samples.len() as u64,
            cover_depth: depth,
        });
    }
    let ln_n = f64::from(spec.n()).ln();
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .map(|g| (f64::from(g.level) * ln_n, (g.cover_count as f64).ln()))
        .collect();
    let (slope, stderr) = least_squares(&pts);
    Ok(BoxDimEstimate {
        levels,
        slope,
        stderr,
        packing_slope: slope,
        formula_value: box_packing_dim(spec),
    })
}

/// Greedy leftmost-first selection of pairwise disjoint closed intervals
/// `[left, left + length]`; every input meets some selected interval.
/// Returns input indices in ascending order of left endpoint.
pub fn select_disjoint(intervals: &[(Rational, Rational)]) -> Vec<usize> {
    let lefts: Vec<&Rational> = intervals.iter().map(|iv| &iv.0).collect();
    let rights: Vec<Rational> = intervals.iter().map(|(l, len)| l + len).collect();
    greedy(&lefts, &rights.iter().collect::<Vec<_>>())
}

fn greedy<T: Ord>(lefts: &[T], rights: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lefts.len()).collect();
    order.sort_by(|&a, &b| lefts[a].cmp(&lefts[b]).then(a.cmp(&b)));
    let mut selected = Vec::new();
    let mut edge: Option<usize> = None;
    for idx in order {
        // closed intervals: touching counts as meeting
        if edge.is_some_and(|e| lefts[idx] <= rights[e]) {
            continue;
        }
        selected.push(idx);
        edge = Some(idx);
    }
    selected
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisjointSubsystem {
    pub k: u32,
    pub l: u32,
    pub selected: Vec<Word>,
    /// `3^{-t} m^{kℓ(t-ε)}` when a dimension `t` was supplied
    pub bound: Option<f64>,
}

/// `3^{-t} m^{kℓ(t-ε)}`, the size the selection is guaranteed to reach.
pub fn vitali_bound(m: u32, k: u32, l: u32, t_bar: f64, eps: f64) -> f64 {
    3f64.powf(-t_bar) * f64::from(m).powf(f64::from(k * l) * (t_bar - eps))
}

/// Concatenations of `l` base words (column positions) with their level
/// numerators over `q·m^{θl-1}`.
fn concatenations(
    g: &Grid,
    base: &[Vec<usize>],
    l: u32,
    budget: u64,
) -> Result<Vec<(Vec<usize>, u128)>> {
    let theta = base.first().map_or(0, Vec::len) as u32;
    check_budget((base.len() as u128).saturating_pow(l), budget)?;
    g.q.checked_mul(pow128(g.m, theta * l)?)
        .ok_or_else(overflow)?;
    let base_values: Vec<u128> = base
        .iter()
        .map(|w| w.iter().fold(0u128, |v, &p| v * g.m + g.tnum[p]))
        .collect();
    let shift = pow128(g.m, theta)?;
    let mut words: Vec<(Vec<usize>, u128)> = vec![(Vec::new(), 0)];
    for _ in 0..l {
        words = words
            .iter()
            .flat_map(|(w, v)| {
                base.iter().zip(&base_values).map(move |(b, bv)| {
                    let mut word = w.clone();
                    word.extend_from_slice(b);
                    (word, v * shift + bv)
                })
            })
            .collect();
    }
    Ok(words)
}

/// Vitali selection over the intervals `[S̄_ρ(0), S̄_ρ(0) + m^{-|ρ|}]`.
fn select_words(g: &Grid, words: &[(Vec<usize>, u128)]) -> Vec<usize> {
    // in units of 1/(q m^{|ρ|}) every interval is [m·V, m·V + q]
    let lefts: Vec<u128> = words.iter().map(|(_, v)| g.m * v).collect();
    let rights: Vec<u128> = lefts.iter().map(|a| a + g.q).collect();
    greedy(&lefts, &rights)
}

fn to_word(g: &Grid, positions: &[usize]) -> Word {
    Word(positions.iter().map(|&p| g.cols[p]).collect())
}

/// Disjoint subfamily of the level-`k·l` projected cylinders.
pub fn vitali_subsystem(
    spec: &CarpetSpec,
    t: &TranslationVector,
    k: u32,
    l: u32,
    dimension: Option<(f64, f64)>,
    budget: u64,
) -> Result<DisjointSubsystem> {
    if k == 0 || l == 0 {
        return Err(Error::invalid("k and l must be positive"));
    }
    let g = Grid::new(spec, t)?;
    let d = g.cols.len();
    check_budget((d as u128).saturating_pow(k), budget)?;
    let mut base: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..k {
        base = base
            .iter()
            .flat_map(|w| (0..d).map(move |p| [w.as_slice(), &[p]].concat()))
            .collect();
    }
    let words = concatenations(&g, &base, l, budget)?;
    let selected = select_words(&g, &words)
        .into_iter()
        .map(|i| to_word(&g, &words[i].0))
        .collect();
    Ok(DisjointSubsystem {
        k,
        l,
        selected,
        bound: dimension.map(|(t_bar, eps)| vitali_bound(spec.m(), k, l, t_bar, eps)),
    })
}

/// Smallest `ℓ₀ <= l_max - span` such that the selection at every
/// `ℓ ∈ [ℓ₀, ℓ₀ + span]` reaches the cardinality bound.
pub fn find_vitali_l0(
    spec: &CarpetSpec,
    t: &TranslationVector,
    t_bar: f64,
    eps: f64,
    span: u32,
    l_max: u32,
    budget: u64,
) -> Result<Option<u32>> {
    let mut ok = Vec::new();
    for l in 1..=l_max {
        let sub = vitali_subsystem(spec, t, 1, l, Some((t_bar, eps)), budget)?;
        ok.push(sub.selected.len() as f64 >= sub.bound.expect("dimension supplied"));
    }
    Ok((1..=l_max.saturating_sub(span)).find(|&l0| {
        ok[(l0 - 1) as usize..=(l0 + span - 1) as usize]
            .iter()
            .all(|&b| b)
    }))
}

/// Projected words of length `θ(k)` in which column `i` occurs exactly
/// `N_i ⌊k/|D|⌋` times, as column positions.
fn hbar_words(spec: &CarpetSpec, k: u64, budget: u64) -> Result<Vec<Vec<usize>>> {
    let stats = crate::dims::subsystem_stats(spec, k)?;
    check_budget(stats.log_card_hbar.exp().round() as u128, budget)?;
    let q0 = k / spec.num_rects() as u64;
    let mut remaining: Vec<u64> = spec.fibre_counts().iter().map(|&c| c as u64 * q0).collect();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(stats.theta_k as usize);
    fn rec(remaining: &mut [u64], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, len: usize) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for p in 0..remaining.len() {
            if remaining[p] > 0 {
                remaining[p] -= 1;
                cur.push(p);
                rec(remaining, cur, out, len);
                cur.pop();
                remaining[p] += 1;
            }
        }
    }
    rec(&mut remaining, &mut cur, &mut out, stats.theta_k as usize);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBound {
    pub k: u64,
    pub l: u32,
    pub theta: u64,
    #[serde(rename = "card_Hbar")]
    pub card_hbar: u64,
    pub card_selected: u64,
    /// cells of side `n^{-θ(k)ℓ}` met by the selected subsystem
    pub cell_count: u64,
    /// extra cover depth below the subsystem words
    pub cover_extra: u32,
    pub statistic: f64,
    pub formula: f64,
}

/// Builds `H̄_k`, takes `ℓ`-fold concatenations, keeps a disjoint subfamily,
/// lifts it to every choice of rows, and counts the cells of side
/// `n^{-θ(k)ℓ}` it meets. Returns `log(count) / (θ(k)ℓ log n)`.
///
/// The cover below the subsystem words starts where a rectangle is narrower
/// than a cell and is then deepened by up to [`MAX_REFINE_STEPS`] levels.
pub fn certified_lower_bound(
    spec: &CarpetSpec,
    t: &TranslationVector,
    k: u64,
    l: u32,
    budget: u64,
) -> Result<LowerBound> {
    if l == 0 {
        return Err(Error::invalid("l must be positive"));
    }
    let g = Grid::new(spec, t)?;
    let base = hbar_words(spec, k, budget)?;
    let theta = base[0].len() as u32;
    let words = concatenations(&g, &base, l, budget)?;
    let selected = select_words(&g, &words);
    let level = theta * l;

    let fibres: Vec<Vec<u64>> = g
        .cols
        .iter()
        .map(|&i| spec.fibre(i).iter().map(|&j| u64::from(j - 1)).collect())
        .collect();
    let n = g.n as u64;
    let mut states: Vec<(u64, u128)> = Vec::new();
    for &s in &selected {
        let (word, x) = &words[s];
        let mut rows = vec![0u64];
        for &p in word {
            check_budget(rows.len() as u128 * fibres[p].len() as u128, budget)?;
            rows = rows
                .iter()
                .flat_map(|&r| fibres[p].iter().map(move |&j| r * n + j))
                .collect();
        }
        check_budget((states.len() + rows.len()) as u128, budget)?;
        states.extend(rows.into_iter().map(|r| (r, *x)));
    }
    states.par_sort_unstable();
    states.dedup();

    // deepen until a rectangle is narrower than a cell: m^{level+e} > n^level
    let target = pow128(g.n, level)?;
    let mut extra = 0;
    while pow128(g.m, level + extra)? <= target {
        extra += 1;
    }
    // then deepen as far as the budget allows, up to MAX_REFINE_STEPS
    let mut count = g.cells(level, &states, extra, budget)?.count();
    for _ in 0..MAX_REFINE_STEPS {
        let Ok(next) = g.cells(level, &states, extra + 1, budget) else {
            break;
        };
        count = next.count();
        extra += 1;
    }
    Ok(LowerBound {
        k,
        l,
        theta: u64::from(theta),
        card_hbar: base.len() as u64,
        card_selected: selected.len() as u64,
        cell_count: count,
        cover_extra: extra,
        statistic: (count as f64).ln() / (f64::from(level) * f64::from(spec.n()).ln()),
        formula: box_packing_dim(spec),
    })
}
