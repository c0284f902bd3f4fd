//! CSV tables: samples, balloon fields, fit traces and density grids.

use std::fmt::Write as _;
use std::path::Path;

use crate::balloon::{BalloonEntry, BalloonField};
use crate::error::{Error, Result};
use crate::gauss2::{SampleSet, SymMat2, Vec2};
use crate::gem::FitTrace;

use super::{fmt_real, DensityGrid};

const SAMPLES_HEADER: [&str; 2] = ["x", "y"];
const BALLOON_HEADER: [&str; 10] = [
    "index",
    "x",
    "y",
    "sigma2",
    "R_aa",
    "R_ab",
    "R_bb",
    "achieved_p",
    "saturated",
    "inner_iters",
];

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn samples_to_csv(points: &[Vec2]) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        let _ = writeln!(out, "{},{}", fmt_real(p.x), fmt_real(p.y));
    }
    out
}

pub fn balloons_to_csv(samples: &SampleSet, field: &BalloonField) -> String {
    let mut out = BALLOON_HEADER.join(",");
    out.push('\n');
    for (n, (x, e)) in samples.points().iter().zip(&field.entries).enumerate() {
        let _ = writeln!(
            out,
            "{n},{},{},{},{},{},{},{},{},{}",
            fmt_real(x.x),
            fmt_real(x.y),
            fmt_real(e.sigma2),
            fmt_real(e.kernel.a),
            fmt_real(e.kernel.b),
            fmt_real(e.kernel.c),
            fmt_real(e.achieved_p),
            u8::from(e.saturated),
            e.inner_iters
        );
    }
    out
}

pub fn trace_to_csv(trace: &FitTrace) -> String {
    let mut out = String::from("iteration,log_likelihood,effective_count,max_delta,psd_projections\n");
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration,
            fmt_real(r.log_likelihood),
            r.effective_count,
            fmt_real(r.max_delta),
            r.psd_projections
        );
    }
    out
}

/// One `x,y,density` row per cell, row 0 (`min.y`) first.
pub fn grid_to_csv(grid: &DensityGrid) -> String {
    let mut out = String::from("x,y,density\n");
    for row in 0..grid.spec.height {
        for col in 0..grid.spec.width {
            let c = grid.spec.cell_center(col, row);
            let _ = writeln!(out, "{},{},{}", fmt_real(c.x), fmt_real(c.y), fmt_real(grid.get(col, row)));
        }
    }
    out
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads every record of a CSV file whose header must equal `header`.
fn read_records(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(path, 1, format!("{other:?}")),
        })?;
    let found = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_err(
            path,
            1,
            format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        out.push((line, record));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, record: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    record
        .get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(path, line, format!("bad value for column {name}")))
}

pub fn read_samples(path: &Path) -> Result<SampleSet> {
    let mut points = Vec::new();
    for (line, rec) in read_records(path, &SAMPLES_HEADER)? {
        let x: f64 = field(path, line, &rec, 0, "x")?;
        let y: f64 = field(path, line, &rec, 1, "y")?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(parse_err(path, line, "non-finite coordinate"));
        }
        points.push(Vec2::new(x, y));
    }
    if points.is_empty() {
        return Err(parse_err(path, 1, "no samples"));
    }
    SampleSet::new(points)
}

/// Reads a balloon CSV back into its sample positions and field.
pub fn read_balloons(path: &Path, target_p: f64) -> Result<(SampleSet, BalloonField)> {
    let mut points = Vec::new();
    let mut entries = Vec::new();
    for (line, rec) in read_records(path, &BALLOON_HEADER)? {
        let index: usize = field(path, line, &rec, 0, "index")?;
        if index != entries.len() {
            return Err(parse_err(path, line, format!("expected index {}, found {index}", entries.len())));
        }
        let real = |i: usize| field::<f64>(path, line, &rec, i, BALLOON_HEADER[i]);
        points.push(Vec2::new(real(1)?, real(2)?));
        let saturated: u8 = field(path, line, &rec, 8, "saturated")?;
        let entry = BalloonEntry {
            sigma2: real(3)?,
            kernel: SymMat2::new(real(4)?, real(5)?, real(6)?),
            achieved_p: real(7)?,
            saturated: match saturated {
                0 => false,
                1 => true,
                _ => return Err(parse_err(path, line, "saturated must be 0 or 1")),
            },
            inner_iters: field(path, line, &rec, 9, "inner_iters")?,
        };
        if !entry.kernel.is_positive_definite() {
            return Err(parse_err(path, line, "kernel is not positive-definite"));
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(parse_err(path, 1, "no balloons"));
    }
    Ok((SampleSet::new(points)?, BalloonField { entries, target_p }))
}
