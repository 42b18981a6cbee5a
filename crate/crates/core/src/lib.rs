//! Bedford–McMullen carpets with translated columns: exact model, dimension
//! formulas, overlap diagnostics, grid box-counting and rendering.

pub mod boxcount;
pub mod cli;
pub mod dims;
pub mod error;
pub mod model;
pub mod overlap;
pub mod rational;
pub mod render;
pub mod spec_io;

pub use error::{Error, Result};
pub use model::{CarpetSpec, GeneralCarpetSpec, Rect, TranslationVector, Word};
pub use rational::Rational;
pub use spec_io::{parse_spec, ParsedSpec};
