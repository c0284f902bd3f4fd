//! SVG overlays: balloons, kernels and mixture components drawn as
//! one-standard-deviation ellipses over the sample dots.

use std::fmt::Write as _;

use crate::balloon::BalloonField;
use crate::gauss2::{MixtureModel, SampleSet, SymMat2, Vec2};

use super::GridSpec;

/// One-sigma contour of a covariance: semi-axes `√λ` and the major-axis
/// angle in radians (counter-clockwise from +x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub center: Vec2,
    pub major: f64,
    pub minor: f64,
    pub angle: f64,
}

impl Ellipse {
    pub fn from_cov(center: Vec2, cov: SymMat2) -> Self {
        let eig = cov.eigen();
        Ellipse {
            center,
            major: eig.major.max(0.0).sqrt(),
            minor: eig.minor.max(0.0).sqrt(),
            angle: eig.angle,
        }
    }

    fn write(&self, out: &mut String, style: &str) {
        let _ = writeln!(
            out,
            "    <ellipse cx=\"{}\" cy=\"{}\" rx=\"{}\" ry=\"{}\" transform=\"rotate({} {} {})\" {style}/>",
            self.center.x,
            self.center.y,
            self.major,
            self.minor,
            self.angle.to_degrees(),
            self.center.x,
            self.center.y
        );
    }
}

fn document(spec: &GridSpec, body: &str) -> String {
    let w = spec.max.x - spec.min.x;
    let h = spec.max.y - spec.min.y;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"{} {} {} {}\">",
        spec.width, spec.height, spec.min.x, spec.min.y, w, h
    );
    let _ = writeln!(
        out,
        "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\"/>",
        spec.min.x, spec.min.y, w, h
    );
    // Data coordinates with y pointing up.
    let _ = writeln!(
        out,
        "  <g transform=\"translate(0 {}) scale(1 -1)\">",
        spec.min.y + spec.max.y
    );
    out.push_str(body);
    out.push_str("  </g>\n</svg>\n");
    out
}

fn dots(out: &mut String, samples: &SampleSet, spec: &GridSpec) {
    let r = 0.004 * (spec.max.x - spec.min.x).max(spec.max.y - spec.min.y);
    for p in samples.points() {
        let _ = writeln!(out, "    <circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"black\"/>", p.x, p.y, r);
    }
}

const STROKE: &str = "fill=\"none\" stroke-width=\"1\" vector-effect=\"non-scaling-stroke\"";

/// Isotropic balloons `σ_n` around each sample.
pub fn balloons_svg(samples: &SampleSet, field: &BalloonField, spec: &GridSpec) -> String {
    let mut body = String::new();
    for (p, e) in samples.points().iter().zip(&field.entries) {
        let color = if e.saturated { "red" } else { "steelblue" };
        Ellipse::from_cov(*p, SymMat2::isotropic(e.sigma2)).write(&mut body, &format!("stroke=\"{color}\" {STROKE}"));
    }
    dots(&mut body, samples, spec);
    document(spec, &body)
}

/// Regularizing kernels `R_n` around each sample.
pub fn kernels_svg(samples: &SampleSet, field: &BalloonField, spec: &GridSpec) -> String {
    let mut body = String::new();
    for (p, e) in samples.points().iter().zip(&field.entries) {
        Ellipse::from_cov(*p, e.kernel).write(&mut body, &format!("stroke=\"darkgreen\" {STROKE}"));
    }
    dots(&mut body, samples, spec);
    document(spec, &body)
}

/// Mixture components, stroke opacity proportional to the prior.
pub fn mixture_svg(samples: &SampleSet, model: &MixtureModel, spec: &GridSpec) -> String {
    let top = model.components.iter().map(|c| c.weight).fold(0.0, f64::max);
    let mut body = String::new();
    for c in &model.components {
        let opacity = if top > 0.0 { (c.weight / top).max(0.1) } else { 1.0 };
        Ellipse::from_cov(c.mean, c.cov).write(
            &mut body,
            &format!("stroke=\"darkred\" stroke-opacity=\"{opacity}\" {STROKE}"),
        );
    }
    dots(&mut body, samples, spec);
    document(spec, &body)
}
