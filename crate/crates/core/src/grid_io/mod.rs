//! Rasterization and file formats.
//!
//! Reals in every text format are printed with 17 significant digits so
//! that reading a file back reproduces the same bits.

mod model_json;
mod pgm;
mod raster;
pub mod svg;
mod tables;

pub use model_json::{model_from_json, model_to_json, read_model, write_model, ModelFile};
pub use pgm::{encode_pgm, read_pgm, write_pgm, PgmImage};
pub use raster::{default_spec, grid_mass, rasterize, DensityGrid, GridSpec};
pub use tables::{
    balloons_to_csv, grid_to_csv, read_balloons, read_samples, samples_to_csv, trace_to_csv, write_text,
};

/// `v` with 17 significant digits, scientific notation.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}
