//! `carpet` command line: argument surface, subcommand drivers and the
//! translation scan.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::boxcount::{certified_lower_bound, estimate_box_dim};
use crate::dims::{box_packing_dim, general_dims, hausdorff_dim, DimensionReport, GeneralDims};
use crate::error::{Error, Result};
use crate::model::{merge_equal_columns, CarpetSpec, TranslationVector};
use crate::overlap::{decay_profile, detect_exact_overlap, Classification, DEFAULT_BUDGET};
use crate::rational::{format_rational, Rational};
use crate::render::render;
use crate::spec_io::{read_spec, ParsedSpec};

pub const EXIT_OVERLAP: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "carpet",
    version,
    about = "Dimension formulas, overlap diagnostics and box-counting for translated carpets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Spec file (JSON)
    #[arg(long)]
    pub spec: PathBuf,
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cap on worker threads
    #[arg(long)]
    pub threads: Option<usize>,
    /// Maximum number of enumerated points
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form dimension report (JSON)
    Dims {
        #[command(flatten)]
        common: Common,
    },
    /// Cylinder separation profile (CSV); exit 3 on an exact overlap
    Delta {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        max_depth: u32,
        /// Witness JSON path; defaults to `<out>.witness.json`, else stderr
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Grid box-counting across levels (CSV)
    Boxcount {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        l_min: u32,
        #[arg(long, default_value_t = 6)]
        l_max: u32,
        #[arg(long, default_value_t = 3)]
        l_extra: u32,
        /// Keep the cover depth at level + l_extra
        #[arg(long)]
        no_refine: bool,
    },
    /// Subsystem lower-bound statistic (JSON)
    Lowerbound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: u64,
        #[arg(long, default_value_t = 1)]
        l: u32,
    },
    /// Binary PGM of the level cover
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        level: u32,
        #[arg(long, default_value_t = 3)]
        l_extra: u32,
    },
    /// Random dyadic translations, each checked for overlaps (CSV)
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        samples: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        denominator_bits: u32,
        /// Overlap search depth
        #[arg(long, default_value_t = 8)]
        depth: u32,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Dims { common }
            | Command::Delta { common, .. }
            | Command::Boxcount { common, .. }
            | Command::Lowerbound { common, .. }
            | Command::Render { common, .. }
            | Command::Scan { common, .. } => common,
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn grid_spec(parsed: ParsedSpec, command: &str) -> Result<(CarpetSpec, TranslationVector)> {
    match parsed {
        ParsedSpec::Standard { spec, translations } => Ok((spec, translations)),
        ParsedSpec::General { .. } => Err(Error::InvalidArgument(format!(
            "`{command}` needs a grid spec (m, n, rects)"
        ))),
    }
}

#[derive(Serialize)]
struct GeneralReport {
    hausdorff: Option<f64>,
    #[serde(rename = "box")]
    box_dim: f64,
    packing: f64,
    flags: Vec<String>,
}

impl From<GeneralDims> for GeneralReport {
    fn from(d: GeneralDims) -> Self {
        let mut flags = Vec::new();
        if d.hausdorff.is_none() {
            flags.push("hausdorff_formula_not_valid".to_string());
        }
        GeneralReport {
            hausdorff: d.hausdorff,
            box_dim: d.box_dim,
            packing: d.box_dim,
            flags,
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let common = cli.command.common();
    if let Some(n) = common.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let parsed = read_spec(&common.spec)?;
    let budget = common.budget;
    match &cli.command {
        Command::Dims { common } => {
            let mut out = output(&common.out)?;
            match parsed {
                ParsedSpec::Standard { spec, translations } => serde_json::to_writer_pretty(
                    &mut out,
                    &DimensionReport::new(&spec, &translations),
                )?,
                ParsedSpec::General { spec, .. } => serde_json::to_writer_pretty(
                    &mut out,
                    &GeneralReport::from(general_dims(&spec)),
                )?,
            }
            writeln!(out)?;
            out.flush()?;
            Ok(0)
        }
        Command::Delta {
            common,
            max_depth,
            witness,
        } => {
            let (spec, t) = grid_spec(parsed, "delta")?;
            let profile = decay_profile(&spec, &t, *max_depth, budget)?;
            let mut w = csv::WriterBuilder::new().from_writer(output(&common.out)?);
            w.write_record(["k", "delta_num", "delta_den", "decay", "classification"])?;
            let label = profile.classification.label();
            for e in &profile.entries {
                w.write_record([
                    e.k.to_string(),
                    e.delta.numer().to_string(),
                    e.delta.denom().to_string(),
                    e.decay.to_string(),
                    label.to_string(),
                ])?;
            }
            w.flush()?;
            if let Classification::ExactOverlap(wit) = &profile.classification {
                let json = serde_json::to_string_pretty(wit)?;
                match witness_path(witness, &common.out) {
                    Some(p) => std::fs::write(p, json + "\n")?,
                    None => eprintln!("{json}"),
                }
                return Ok(EXIT_OVERLAP);
            }
            if let Some(needed) = profile.budget_exhausted {
                eprintln!("{}", Error::Budget { needed, budget });
                return Ok(EXIT_BUDGET);
            }
            Ok(0)
        }
        Command::Boxcount {
            common,
            l_min,
            l_max,
            l_extra,
            no_refine,
        } => {
            let (spec, t) = grid_spec(parsed, "boxcount")?;
            let est = estimate_box_dim(&spec, &t, *l_min, *l_max, *l_extra, !no_refine, budget)?;
            let mut w = csv::WriterBuilder::new()
                .flexible(true)
                .from_writer(output(&common.out)?);
            w.write_record(["l", "r_num", "r_den", "cover_count", "sample_count", "L"])?;
            for g in &est.levels {
                w.write_record([
                    g.level.to_string(),
                    g.r.numer().to_string(),
                    g.r.denom().to_string(),
                    g.cover_count.to_string(),
                    g.sample_count.to_string(),
                    g.cover_depth.to_string(),
                ])?;
            }
            w.write_record(["slope".to_string(), est.slope.to_string()])?;
            w.write_record(["stderr".to_string(), est.stderr.to_string()])?;
            w.write_record(["formula".to_string(), est.formula_value.to_string()])?;
            w.flush()?;
            Ok(0)
        }
        Command::Lowerbound { common, k, l } => {
            let (spec, t) = grid_spec(parsed, "lowerbound")?;
            let lb = certified_lower_bound(&spec, &t, *k, *l, budget)?;
            let mut out = output(&common.out)?;
            serde_json::to_writer_pretty(&mut out, &lb)?;
            writeln!(out)?;
            out.flush()?;
            Ok(0)
        }
        Command::Render {
            common,
            level,
            l_extra,
        } => {
            let (spec, t) = grid_spec(parsed, "render")?;
            let img = render(&spec, &t, *level, *l_extra, budget)?;
            let mut out = output(&common.out)?;
            img.write_pgm(&mut out)?;
            out.flush()?;
            Ok(0)
        }
        Command::Scan {
            common,
            samples,
            seed,
            denominator_bits,
            depth,
        } => {
            let (spec, _) = grid_spec(parsed, "scan")?;
            let rows = scan(&spec, *samples, *seed, *denominator_bits, *depth, budget)?;
            let mut w = csv::Writer::from_writer(output(&common.out)?);
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
            Ok(0)
        }
    }
}

fn witness_path(explicit: &Option<PathBuf>, out: &Option<PathBuf>) -> Option<PathBuf> {
    explicit.clone().or_else(|| {
        out.as_deref().map(|p: &Path| {
            let mut s = p.as_os_str().to_owned();
            s.push(".witness.json");
            PathBuf::from(s)
        })
    })
}

/// One scanned translation vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub sample: u32,
    /// `p/q` values in column order, `;`-separated
    pub t: String,
    pub overlap: bool,
    pub overlap_depth: Option<u32>,
    pub hausdorff: f64,
    #[serde(rename = "box")]
    pub box_dim: f64,
    pub merged_hausdorff: Option<f64>,
    pub merged_box: Option<f64>,
}

/// Overlap search to `depth` plus formula values, merged when columns coincide.
pub fn scan_row(
    spec: &CarpetSpec,
    t: &TranslationVector,
    sample: u32,
    depth: u32,
    budget: u64,
) -> Result<ScanRow> {
    let witness = if spec.num_columns() >= 2 {
        detect_exact_overlap(spec, t, depth, budget)?
    } else {
        None
    };
    let merged = t.has_duplicates().then(|| merge_equal_columns(spec, t).0);
    Ok(ScanRow {
        sample,
        t: t.values()
            .map(format_rational)
            .collect::<Vec<_>>()
            .join(";"),
        overlap: witness.is_some(),
        overlap_depth: witness.map(|w| w.k),
        hausdorff: hausdorff_dim(spec),
        box_dim: box_packing_dim(spec),
        merged_hausdorff: merged.as_ref().map(hausdorff_dim),
        merged_box: merged.as_ref().map(box_packing_dim),
    })
}

/// `t_i = U_i / 2^bits` with `U_i` uniform on `[0, ⌊(1 - 1/m) 2^bits⌋]`.
pub fn random_dyadic(
    spec: &CarpetSpec,
    rng: &mut impl Rng,
    bits: u32,
) -> Result<TranslationVector> {
    let scale = 1u128 << bits;
    let m = u128::from(spec.m());
    let top = (scale * (m - 1) / m) as u64;
    let values = (0..spec.num_columns())
        .map(|_| Rational::new(BigInt::from(rng.random_range(0..=top)), BigInt::from(scale)))
        .collect();
    TranslationVector::from_values(spec, values)
}

pub fn scan(
    spec: &CarpetSpec,
    samples: u32,
    seed: u64,
    bits: u32,
    depth: u32,
    budget: u64,
) -> Result<Vec<ScanRow>> {
    if samples == 0 {
        return Err(Error::invalid("samples must be at least 1"));
    }
    if !(1..=62).contains(&bits) {
        return Err(Error::invalid("denominator bits must be in 1..=62"));
    }
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|s| {
            let t = random_dyadic(spec, &mut rng, bits)?;
            scan_row(spec, &t, s, depth, budget)
        })
        .collect()
}
