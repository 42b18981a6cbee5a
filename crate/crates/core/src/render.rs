//! Binary PGM rendering of the level cover: one pixel per grid cell.

use std::io::Write;

use crate::boxcount::{cover_cells, CellSet};
use crate::error::{Error, Result};
use crate::model::{CarpetSpec, TranslationVector};

pub const MAX_SIDE: u64 = 8192;

/// Row-major occupancy bitmap, top row first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u64,
    height: u64,
    pixels: Vec<bool>,
}

impl RasterImage {
    /// Black pixel per occupied cell, flipped so cell row 0 is the bottom row.
    pub fn from_cells(cells: &CellSet) -> Result<Self> {
        let side = cells.side();
        if side > MAX_SIDE {
            return Err(Error::invalid(format!(
                "image side {side} exceeds the {MAX_SIDE} pixel limit"
            )));
        }
        let mut pixels = vec![false; (side * side) as usize];
        for (row, ranges) in cells.rows() {
            let y = side - 1 - row;
            for &(lo, hi) in ranges {
                let start = (y * side + lo) as usize;
                let end = (y * side + hi) as usize;
                pixels[start..=end].fill(true);
            }
        }
        Ok(RasterImage {
            width: side,
            height: side,
            pixels,
        })
    }

    pub fn width(&self) -> u64 {
        self.width
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    /// `(x, y)` with `y = 0` the top row.
    pub fn is_black(&self, x: u64, y: u64) -> bool {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn black_count(&self) -> u64 {
        self.pixels.iter().filter(|&&b| b).count() as u64
    }

    /// P5, maxval 255, black 0, white 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|&b| if b { 0u8 } else { 255u8 }));
        out
    }

    pub fn write_pgm(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_pgm())?;
        Ok(())
    }
}

/// Renders the cover cells at `r = n^{-ℓ}`, depth `L = ℓ + l_extra`.
pub fn render(
    spec: &CarpetSpec,
    t: &TranslationVector,
    level: u32,
    l_extra: u32,
    budget: u64,
) -> Result<RasterImage> {
    let side = u64::from(spec.n()).checked_pow(level);
    if side.is_none_or(|s| s > MAX_SIDE) {
        return Err(Error::invalid(format!(
            "n^level exceeds the {MAX_SIDE} pixel limit"
        )));
    }
    let cells = cover_cells(spec, t, level, level + l_extra, budget)?;
    RasterImage::from_cells(&cells)
}
