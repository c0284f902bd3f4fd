//! 16-bit binary PGM (`P5`, maxval 65535).
//!
//! The first image row is the top of the plot (`max.y`). A comment line
//! carries the bounding box, the scale factor (grid maximum) and the gamma:
//!
//! ```text
//! P5
//! # balloon-gmm bbox <xmin> <ymin> <xmax> <ymax> scale <max> gamma <gamma>
//! <width> <height>
//! 65535
//! ```
//!
//! A cell with density `v` is stored as `round(65535 · (v / max)^gamma)`, big-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gauss2::Vec2;

use super::{fmt_real, DensityGrid};

const MAXVAL: u16 = 65535;
const TAG: &str = "# balloon-gmm";

#[derive(Clone, Debug, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub min: Vec2,
    pub max: Vec2,
    pub scale: f64,
    pub gamma: f64,
    /// Top row first.
    pub pixels: Vec<u16>,
}

pub fn encode_pgm(grid: &DensityGrid, gamma: f64) -> Result<Vec<u8>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
    }
    let spec = &grid.spec;
    let scale = grid.max_value();
    let mut out = format!(
        "P5\n{TAG} bbox {} {} {} {} scale {} gamma {}\n{} {}\n{MAXVAL}\n",
        fmt_real(spec.min.x),
        fmt_real(spec.min.y),
        fmt_real(spec.max.x),
        fmt_real(spec.max.y),
        fmt_real(scale),
        fmt_real(gamma),
        spec.width,
        spec.height
    )
    .into_bytes();
    out.reserve(2 * spec.width * spec.height);
    for row in (0..spec.height).rev() {
        for col in 0..spec.width {
            let v = grid.get(col, row);
            if !v.is_finite() {
                return Err(Error::NonFiniteCell { col, row, value: v });
            }
            let level = if scale > 0.0 {
                ((v / scale).powf(gamma) * MAXVAL as f64).round() as u16
            } else {
                0
            };
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_pgm(grid: &DensityGrid, gamma: f64, path: &Path) -> Result<()> {
    let bytes = encode_pgm(grid, gamma)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn header_line<'a>(bytes: &'a [u8], pos: &mut usize, line: &mut u64, path: &Path) -> Result<&'a str> {
    let start = *pos;
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|i| start + i)
        .ok_or_else(|| parse_err(path, *line, "truncated header"))?;
    *pos = end + 1;
    *line += 1;
    std::str::from_utf8(&bytes[start..end]).map_err(|_| parse_err(path, *line, "header is not UTF-8"))
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses an image written by [`write_pgm`].
pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

fn decode_pgm(bytes: &[u8], path: &Path) -> Result<PgmImage> {
    let mut pos = 0;
    let mut line = 0;
    if header_line(bytes, &mut pos, &mut line, path)? != "P5" {
        return Err(parse_err(path, line, "expected magic P5"));
    }
    let meta = header_line(bytes, &mut pos, &mut line, path)?;
    let fields: Vec<&str> = meta
        .strip_prefix(TAG)
        .ok_or_else(|| parse_err(path, line, "missing metadata comment"))?
        .split_whitespace()
        .collect();
    let real = |i: usize| -> Result<f64> {
        fields
            .get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, line, format!("bad metadata field {i}")))
    };
    if fields.len() != 9 || fields[0] != "bbox" || fields[5] != "scale" || fields[7] != "gamma" {
        return Err(parse_err(path, line, "malformed metadata comment"));
    }
    let (min, max) = (Vec2::new(real(1)?, real(2)?), Vec2::new(real(3)?, real(4)?));
    let (scale, gamma) = (real(6)?, real(8)?);
    let dims = header_line(bytes, &mut pos, &mut line, path)?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (width, height) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) => (w, h),
        _ => return Err(parse_err(path, line, "bad dimensions")),
    };
    if header_line(bytes, &mut pos, &mut line, path)? != MAXVAL.to_string() {
        return Err(parse_err(path, line, "expected maxval 65535"));
    }
    let body = &bytes[pos..];
    if body.len() != 2 * width * height {
        return Err(parse_err(
            path,
            line + 1,
            format!("expected {} data bytes, found {}", 2 * width * height, body.len()),
        ));
    }
    let pixels = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok(PgmImage {
        width,
        height,
        min,
        max,
        scale,
        gamma,
        pixels,
    })
}
