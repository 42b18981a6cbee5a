//! Closed-form dimension values for translated carpets and the counting
//! quantities behind the box-dimension lower bound (`θ(k)`, `|H_k|`, `s_k`).
//!
//! Everything is evaluated in `f64` from natural logs of integers and exact
//! rationals; sums of powers go through log-sum-exp.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::One;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::model::{merge_equal_columns, CarpetSpec, GeneralCarpetSpec, TranslationVector};
use crate::rational::{ln_rational, Rational};

fn ln_usize(v: usize) -> f64 {
    (v as f64).ln()
}

fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log Σ N_i^γ / log(1/a)` with `γ = log(1/a)/log(1/b)`.
fn hausdorff_core(ln_inv_a: f64, ln_inv_b: f64, counts: &[usize]) -> f64 {
    let gamma = ln_inv_a / ln_inv_b;
    log_sum_exp(counts.iter().map(|&c| gamma * ln_usize(c))) / ln_inv_a
}

/// Projection dimension `min(log m / log(1/a), 1)` plus the vertical term.
/// The grid formula and the generalized one share this path so the embedding
/// of a grid system reproduces its values bit for bit.
fn box_core(ln_inv_a: f64, ln_inv_b: f64, counts: &[usize]) -> f64 {
    let cols = counts.len();
    let total: usize = counts.iter().sum();
    let projection = ln_usize(cols) / ln_inv_a;
    if projection <= 1.0 {
        projection + (ln_usize(total) - ln_usize(cols)) / ln_inv_b
    } else {
        1.0 + (ln_usize(total) - ln_inv_a) / ln_inv_b
    }
}

fn ln_mn(spec: &CarpetSpec) -> (f64, f64) {
    (f64::from(spec.m()).ln(), f64::from(spec.n()).ln())
}

/// `log Σ_i N_i^{log m/log n} / log m`.
pub fn hausdorff_dim(spec: &CarpetSpec) -> f64 {
    let (lm, ln) = ln_mn(spec);
    hausdorff_core(lm, ln, &spec.fibre_counts())
}

/// `log|D̄|/log m + log(|D|/|D̄|)/log n`. Packing dimension takes the same value.
pub fn box_packing_dim(spec: &CarpetSpec) -> f64 {
    let (lm, ln) = ln_mn(spec);
    box_core(lm, ln, &spec.fibre_counts())
}

/// Assouad and lower dimensions of the unperturbed carpet: the box formula
/// with the average fibre replaced by the largest / smallest one.
pub fn assouad_lower_dims(spec: &CarpetSpec) -> (f64, f64) {
    let (lm, ln) = ln_mn(spec);
    let counts = spec.fibre_counts();
    let projection = ln_usize(counts.len()) / lm;
    let max = *counts.iter().max().expect("non-empty");
    let min = *counts.iter().min().expect("non-empty");
    (
        projection + ln_usize(max) / ln,
        projection + ln_usize(min) / ln,
    )
}

/// Singular-value-function dimension of the diagonal system: the root of
/// `|D| m^{-s} = 1` while `s <= 1`, else of `|D| m^{-1} n^{-(s-1)} = 1`, capped at 2.
pub fn affinity_dim(spec: &CarpetSpec) -> f64 {
    let (lm, ln) = ln_mn(spec);
    let d = ln_usize(spec.num_rects());
    let first = d / lm;
    if first <= 1.0 {
        first
    } else {
        (1.0 + (d - lm) / ln).min(2.0)
    }
}

/// Bernoulli weights of the McMullen measure and of its projection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McMullenWeights {
    /// `p_(i,j) = N_i^{γ-1} / m^s`
    pub rect: BTreeMap<(u32, u32), f64>,
    /// `p_i = N_i^γ / m^s`
    pub column: BTreeMap<u32, f64>,
}

pub fn mcmullen_weights(spec: &CarpetSpec) -> McMullenWeights {
    let (lm, ln) = ln_mn(spec);
    let gamma = lm / ln;
    let counts = spec.fibre_counts();
    let log_norm = log_sum_exp(counts.iter().map(|&c| gamma * ln_usize(c)));
    let mut rect = BTreeMap::new();
    let mut column = BTreeMap::new();
    for i in spec.columns() {
        let c = spec.column_count(i);
        column.insert(i, (gamma * ln_usize(c) - log_norm).exp());
        let p = ((gamma - 1.0) * ln_usize(c) - log_norm).exp();
        for &j in spec.fibre(i) {
            rect.insert((i, j), p);
        }
    }
    McMullenWeights { rect, column }
}

/// Almost-sure slice dimension `Σ p_i log N_i / log n`.
pub fn expected_slice_dim(spec: &CarpetSpec) -> f64 {
    let (_, ln) = ln_mn(spec);
    let w = mcmullen_weights(spec);
    w.column
        .iter()
        .map(|(&i, p)| p * ln_usize(spec.column_count(i)))
        .sum::<f64>()
        / ln
}

/// Entropy dimension of the projected measure, `-Σ p_i log p_i / log m`.
pub fn projected_entropy_dim(spec: &CarpetSpec) -> f64 {
    let (lm, _) = ln_mn(spec);
    let w = mcmullen_weights(spec);
    -w.column.values().map(|p| p * p.ln()).sum::<f64>() / lm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneralDims {
    /// Absent when the projection has more columns than `1/a` or `a > 1/2`.
    pub hausdorff: Option<f64>,
    #[serde(rename = "box")]
    pub box_dim: f64,
}

pub fn general_dims(spec: &GeneralCarpetSpec) -> GeneralDims {
    let ln_inv_a = -ln_rational(spec.a());
    let ln_inv_b = -ln_rational(spec.b());
    let counts = spec.fibre_counts();
    let box_dim = box_core(ln_inv_a, ln_inv_b, &counts);
    let half = Rational::new(1.into(), 2.into());
    let narrow = ln_usize(counts.len()) / ln_inv_a <= 1.0 && *spec.a() <= half;
    GeneralDims {
        hausdorff: narrow.then(|| hausdorff_core(ln_inv_a, ln_inv_b, &counts)),
        box_dim,
    }
}

/// `b log b - b <= log b! <= b log b - b + log b`, as a bracket.
///
/// In natural log the upper end only holds from `b = 7`.
pub fn stirling_bounds(b: u64) -> Result<(f64, f64)> {
    if b < 2 {
        return Err(Error::invalid("Stirling bracket needs b >= 2"));
    }
    let bf = b as f64;
    let lower = bf * bf.ln() - bf;
    Ok((lower, lower + bf.ln()))
}

pub fn log_factorial(b: u64) -> f64 {
    ln_factorial(b)
}

fn factorial(b: u64) -> BigUint {
    (2..=b).fold(BigUint::one(), |acc, v| acc * v)
}

/// `θ(k) = |D| ⌊k/|D|⌋`
pub fn theta(spec: &CarpetSpec, k: u64) -> u64 {
    let big_n = spec.num_rects() as u64;
    big_n * (k / big_n)
}

/// Statistics of the uniform-fibre subsystem `H_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsystemStats {
    pub k: u64,
    pub theta_k: u64,
    /// natural log of `|H_k|`
    pub log_card_h: f64,
    /// natural log of `|H̄_k|`
    pub log_card_hbar: f64,
    pub s_k: f64,
}

pub fn subsystem_stats(spec: &CarpetSpec, k: u64) -> Result<SubsystemStats> {
    let big_n = spec.num_rects() as u64;
    if k < big_n {
        return Err(Error::invalid(format!(
            "depth k = {k} is below |D| = {big_n}"
        )));
    }
    let q = k / big_n;
    let theta_k = big_n * q;
    let log_card_h = log_factorial(theta_k) - big_n as f64 * log_factorial(q);
    let log_card_hbar = log_factorial(theta_k)
        - spec
            .fibre_counts()
            .iter()
            .map(|&c| log_factorial(c as u64 * q))
            .sum::<f64>();
    let (lm, ln) = ln_mn(spec);
    let sbar = ln_usize(spec.num_columns()) / lm;
    let s_k = log_card_h / (k as f64 * ln) + sbar * (1.0 - lm / ln);
    Ok(SubsystemStats {
        k,
        theta_k,
        log_card_h,
        log_card_hbar,
        s_k,
    })
}

/// `|H_k| = θ(k)! / (⌊k/|D|⌋!)^{|D|}`, exactly.
pub fn card_h_exact(spec: &CarpetSpec, k: u64) -> Result<BigUint> {
    let big_n = spec.num_rects() as u64;
    if k < big_n {
        return Err(Error::invalid(format!(
            "depth k = {k} is below |D| = {big_n}"
        )));
    }
    let q = k / big_n;
    let denom = num_traits::pow(factorial(q), big_n as usize);
    Ok(factorial(big_n * q) / denom)
}

/// `|H̄_k| = θ(k)! / Π_i (N_i ⌊k/|D|⌋)!`, exactly.
pub fn card_hbar_exact(spec: &CarpetSpec, k: u64) -> Result<BigUint> {
    let big_n = spec.num_rects() as u64;
    if k < big_n {
        return Err(Error::invalid(format!(
            "depth k = {k} is below |D| = {big_n}"
        )));
    }
    let q = k / big_n;
    let denom = spec
        .fibre_counts()
        .iter()
        .fold(BigUint::one(), |acc, &c| acc * factorial(c as u64 * q));
    Ok(factorial(big_n * q) / denom)
}

/// Smallest `k = |D|·2^j` with `box - s_k < eps`.
pub fn s_k_convergence_depth(spec: &CarpetSpec, eps: f64, max_k: u64) -> Result<SubsystemStats> {
    let target = box_packing_dim(spec);
    let mut k = spec.num_rects() as u64;
    loop {
        let stats = subsystem_stats(spec, k)?;
        if target - stats.s_k < eps {
            return Ok(stats);
        }
        if k > max_k / 2 {
            return Err(Error::invalid(format!(
                "s_k did not come within {eps} of {target} by k = {k}"
            )));
        }
        k *= 2;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedDims {
    pub hausdorff: f64,
    #[serde(rename = "box")]
    pub box_dim: f64,
    pub columns: usize,
    pub rects: usize,
}

/// All closed-form values for one `(spec, t)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub hausdorff: f64,
    #[serde(rename = "box")]
    pub box_dim: f64,
    pub packing: f64,
    pub assouad: f64,
    pub lower: f64,
    pub affinity: f64,
    pub expected_slice: f64,
    /// keyed `"i,j"`
    pub weights: BTreeMap<String, f64>,
    /// keyed `"i"`
    pub projected_weights: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    /// Upper bounds after collapsing columns with equal translations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merged: Option<MergedDims>,
}

pub const FLAG_STANDARD: &str = "standard_translations";
pub const FLAG_PERTURBED: &str = "perturbed_translations";
pub const FLAG_UNPERTURBED_ONLY: &str = "assouad_lower_valid_for_standard_translations_only";
pub const FLAG_COLUMN_OVERLAP: &str = "exact_column_overlap";

impl DimensionReport {
    pub fn new(spec: &CarpetSpec, t: &TranslationVector) -> Self {
        let box_dim = box_packing_dim(spec);
        let (assouad, lower) = assouad_lower_dims(spec);
        let w = mcmullen_weights(spec);
        let mut flags = Vec::new();
        if t.is_standard(spec) {
            flags.push(FLAG_STANDARD.to_string());
        } else {
            flags.push(FLAG_PERTURBED.to_string());
            flags.push(FLAG_UNPERTURBED_ONLY.to_string());
        }
        let merged = t.has_duplicates().then(|| {
            flags.push(FLAG_COLUMN_OVERLAP.to_string());
            let (ms, _) = merge_equal_columns(spec, t);
            MergedDims {
                hausdorff: hausdorff_dim(&ms),
                box_dim: box_packing_dim(&ms),
                columns: ms.num_columns(),
                rects: ms.num_rects(),
            }
        });
        DimensionReport {
            hausdorff: hausdorff_dim(spec),
            box_dim,
            packing: box_dim,
            assouad,
            lower,
            affinity: affinity_dim(spec),
            expected_slice: expected_slice_dim(spec),
            weights: w
                .rect
                .iter()
                .map(|(&(i, j), p)| (format!("{i},{j}"), *p))
                .collect(),
            projected_weights: w.column.iter().map(|(i, p)| (i.to_string(), *p)).collect(),
            flags,
            merged,
        }
    }
}
