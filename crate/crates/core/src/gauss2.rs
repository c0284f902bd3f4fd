//! Bivariate Gaussian algebra.
//!
//! Everything here is closed-form 2×2 arithmetic: densities, peak-normalized
//! kernels, Gaussian products and the integral of a mixture against a kernel.
//! Covariances are stored as the three free entries of a symmetric matrix.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest determinant accepted before a matrix is inverted.
pub const MIN_DETERMINANT: f64 = 1e-300;

/// Tolerance on the prior mass of a valid mixture.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Symmetric 2×2 matrix `[[a, b], [b, c]]`.
///
/// Most uses require a positive-definite matrix. Definiteness is checked
/// wherever the matrix is inverted; the type itself also carries the
/// indefinite additive matrices produced by the M-step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymMat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Closed-form eigendecomposition of a [`SymMat2`].
///
/// `major >= minor`; the major eigenvector is `(cos angle, sin angle)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigen2 {
    pub major: f64,
    pub minor: f64,
    pub angle: f64,
}

impl Eigen2 {
    pub fn major_axis(&self) -> Vec2 {
        let (s, c) = self.angle.sin_cos();
        Vec2::new(c, s)
    }

    pub fn minor_axis(&self) -> Vec2 {
        let (s, c) = self.angle.sin_cos();
        Vec2::new(-s, c)
    }

    pub fn compose(&self) -> SymMat2 {
        SymMat2::from_eigen(self.major, self.minor, self.angle)
    }
}

impl SymMat2 {
    pub const IDENTITY: SymMat2 = SymMat2 { a: 1.0, b: 0.0, c: 1.0 };
    pub const ZERO: SymMat2 = SymMat2 { a: 0.0, b: 0.0, c: 0.0 };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        SymMat2 { a, b, c }
    }

    /// `s · I`
    pub const fn isotropic(s: f64) -> Self {
        SymMat2 { a: s, b: 0.0, c: s }
    }

    /// `v vᵀ`
    pub fn outer(v: Vec2) -> Self {
        SymMat2::new(v.x * v.x, v.x * v.y, v.y * v.y)
    }

    /// Matrix with eigenvalue `major` along angle `angle` and `minor` orthogonal to it.
    pub fn from_eigen(major: f64, minor: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        SymMat2::new(
            major * c * c + minor * s * s,
            (major - minor) * c * s,
            major * s * s + minor * c * c,
        )
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a > 0.0 && self.det() > MIN_DETERMINANT && self.is_finite()
    }

    pub(crate) fn require_pd(&self, what: &'static str) -> Result<()> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite {
                what,
                a: self.a,
                b: self.b,
                c: self.c,
            })
        }
    }

    pub fn inverse(&self) -> Result<SymMat2> {
        self.require_pd("matrix")?;
        Ok(self.inverse_unchecked())
    }

    fn inverse_unchecked(&self) -> SymMat2 {
        let det = self.det();
        SymMat2::new(self.c / det, -self.b / det, self.a / det)
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.b * v.x + self.c * v.y)
    }

    /// `vᵀ M v`
    pub fn quad_form(&self, v: Vec2) -> f64 {
        self.a * v.x * v.x + 2.0 * self.b * v.x * v.y + self.c * v.y * v.y
    }

    /// `vᵀ M⁻¹ v` for positive-definite `M`.
    pub fn inv_quad_form(&self, v: Vec2) -> Result<f64> {
        self.require_pd("matrix")?;
        Ok((self.c * v.x * v.x - 2.0 * self.b * v.x * v.y + self.a * v.y * v.y) / self.det())
    }

    pub fn eigen(&self) -> Eigen2 {
        let mean = 0.5 * (self.a + self.c);
        let half_diff = 0.5 * (self.a - self.c);
        let radius = half_diff.hypot(self.b);
        let angle = if radius == 0.0 {
            0.0
        } else {
            0.5 * (2.0 * self.b).atan2(self.a - self.c)
        };
        Eigen2 {
            major: mean + radius,
            minor: mean - radius,
            angle,
        }
    }

    /// `Q M Qᵀ` for the counter-clockwise rotation `Q` by `angle`.
    pub fn rotated(&self, angle: f64) -> SymMat2 {
        let (s, c) = angle.sin_cos();
        let a = c * c * self.a - 2.0 * c * s * self.b + s * s * self.c;
        let b = c * s * (self.a - self.c) + (c * c - s * s) * self.b;
        let cc = s * s * self.a + 2.0 * c * s * self.b + c * c * self.c;
        SymMat2::new(a, b, cc)
    }

    /// Raises every eigenvalue below `floor` up to `floor`.
    ///
    /// Returns the projected matrix and whether any eigenvalue was lifted.
    pub fn floor_eigenvalues(&self, floor: f64) -> (SymMat2, bool) {
        let eig = self.eigen();
        if eig.minor >= floor && self.is_positive_definite() {
            return (*self, false);
        }
        let major = eig.major.max(floor);
        let minor = eig.minor.max(floor);
        (SymMat2::from_eigen(major, minor, eig.angle), true)
    }

    pub fn frobenius(&self) -> f64 {
        (self.a * self.a + 2.0 * self.b * self.b + self.c * self.c).sqrt()
    }
}

impl Add for SymMat2 {
    type Output = SymMat2;
    fn add(self, rhs: SymMat2) -> SymMat2 {
        SymMat2::new(self.a + rhs.a, self.b + rhs.b, self.c + rhs.c)
    }
}

impl AddAssign for SymMat2 {
    fn add_assign(&mut self, rhs: SymMat2) {
        self.a += rhs.a;
        self.b += rhs.b;
        self.c += rhs.c;
    }
}

impl Sub for SymMat2 {
    type Output = SymMat2;
    fn sub(self, rhs: SymMat2) -> SymMat2 {
        SymMat2::new(self.a - rhs.a, self.b - rhs.b, self.c - rhs.c)
    }
}

impl Mul<f64> for SymMat2 {
    type Output = SymMat2;
    fn mul(self, k: f64) -> SymMat2 {
        SymMat2::new(self.a * k, self.b * k, self.c * k)
    }
}

/// One weighted term of a Gaussian mixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussComponent {
    pub weight: f64,
    pub mean: Vec2,
    pub cov: SymMat2,
}

impl GaussComponent {
    pub fn new(weight: f64, mean: Vec2, cov: SymMat2) -> Self {
        GaussComponent { weight, mean, cov }
    }
}

/// A finite Gaussian mixture density with priors summing to one.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MixtureModel {
    pub components: Vec<GaussComponent>,
}

impl MixtureModel {
    /// Builds a model and checks every invariant.
    pub fn new(components: Vec<GaussComponent>) -> Result<Self> {
        let model = MixtureModel { components };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidConfig("mixture has no components".into()));
        }
        for (m, comp) in self.components.iter().enumerate() {
            if !(0.0..=1.0).contains(&comp.weight) {
                return Err(Error::InvalidConfig(format!(
                    "component {m} has prior {} outside [0, 1]",
                    comp.weight
                )));
            }
            if !comp.mean.is_finite() {
                return Err(Error::InvalidConfig(format!("component {m} has a non-finite mean")));
            }
            comp.cov.require_pd("component covariance")?;
        }
        let total = self.total_weight();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!("priors sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn translated(&self, offset: Vec2) -> MixtureModel {
        MixtureModel {
            components: self
                .components
                .iter()
                .map(|c| GaussComponent::new(c.weight, c.mean + offset, c.cov))
                .collect(),
        }
    }
}

/// Ordered 2-D point samples with their bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    points: Vec<Vec2>,
    min: Vec2,
    max: Vec2,
}

impl SampleSet {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySamples);
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        let mut min = points[0];
        let mut max = points[0];
        for p in &points[1..] {
            min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
            max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
        }
        Ok(SampleSet { points, min, max })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> Vec2 {
        self.min
    }

    pub fn max(&self) -> Vec2 {
        self.max
    }

    /// Length of the bounding-box diagonal.
    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn mean(&self) -> Vec2 {
        let mut sum = Vec2::ZERO;
        for &p in &self.points {
            sum += p;
        }
        sum * (1.0 / self.points.len() as f64)
    }

    pub fn translated(&self, offset: Vec2) -> SampleSet {
        SampleSet {
            points: self.points.iter().map(|&p| p + offset).collect(),
            min: self.min + offset,
            max: self.max + offset,
        }
    }
}

/// Parameters of the Gaussian proportional to `N(r|μ,Σ)·K(r|x,S)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductParams {
    pub cov: SymMat2,
    pub mean: Vec2,
}

/// Bivariate normal density `N(x|mean, cov)`.
pub fn gauss_pdf(x: Vec2, mean: Vec2, cov: SymMat2) -> Result<f64> {
    cov.require_pd("covariance")?;
    let q = cov.inv_quad_form(x - mean)?;
    Ok((-0.5 * q).exp() / (2.0 * PI * cov.det().sqrt()))
}

/// Peak-normalized kernel `K(r|center, R) = exp(-½ (r-center)ᵀ R⁻¹ (r-center))`.
pub fn kernel_eval(r: Vec2, center: Vec2, kernel: SymMat2) -> Result<f64> {
    kernel.require_pd("kernel")?;
    Ok((-0.5 * kernel.inv_quad_form(r - center)?).exp())
}

/// Covariance of the product and the offset `center − μ_{m|S}`.
///
/// The offset is formed as `Σ_{m|S} Σ⁻¹ (center − μ)`, which only depends on
/// the difference of the two means.
fn product_with_offset(
    mean: Vec2,
    cov: SymMat2,
    center: Vec2,
    s: SymMat2,
) -> Result<(SymMat2, Vec2)> {
    cov.require_pd("component covariance")?;
    s.require_pd("balloon matrix")?;
    let precision = cov.inverse_unchecked() + s.inverse_unchecked();
    precision.require_pd("product precision")?;
    let prod_cov = precision.inverse_unchecked();
    let pulled = cov.inverse_unchecked().mul_vec(center - mean);
    Ok((prod_cov, prod_cov.mul_vec(pulled)))
}

/// `Σ_{m|S} = (Σ⁻¹ + S⁻¹)⁻¹`, `μ_{m|S} = Σ_{m|S}(Σ⁻¹μ + S⁻¹x)`.
pub fn product_params(mean: Vec2, cov: SymMat2, center: Vec2, s: SymMat2) -> Result<ProductParams> {
    let (prod_cov, offset) = product_with_offset(mean, cov, center, s)?;
    Ok(ProductParams {
        cov: prod_cov,
        mean: center - offset,
    })
}

/// `π_m ∫ N(r|μ_m,Σ_m) K(r|x,S) dr = π_m √(|S|/|Σ_m+S|) K(x|μ_m, Σ_m+S)`.
pub fn overlap_prob(component: &GaussComponent, center: Vec2, s: SymMat2) -> Result<f64> {
    component.cov.require_pd("component covariance")?;
    s.require_pd("balloon matrix")?;
    let sum = component.cov + s;
    let ratio = (s.det() / sum.det()).sqrt();
    let k = (-0.5 * sum.inv_quad_form(center - component.mean)?).exp();
    Ok(component.weight * ratio * k)
}

/// Probability mass of `model` captured by the kernel `K(·|center, S)`.
pub fn total_overlap(model: &MixtureModel, center: Vec2, s: SymMat2) -> Result<f64> {
    let mut total = 0.0;
    for comp in &model.components {
        total += overlap_prob(comp, center, s)?;
    }
    Ok(total)
}

pub fn mixture_pdf(model: &MixtureModel, x: Vec2) -> Result<f64> {
    let mut total = 0.0;
    for comp in &model.components {
        total += comp.weight * gauss_pdf(x, comp.mean, comp.cov)?;
    }
    Ok(total)
}

/// Sum of log densities; `zero_density_sample` names the first sample with
/// zero density, in which case `value` is `-inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub zero_density_sample: Option<usize>,
}

pub fn log_likelihood(model: &MixtureModel, samples: &SampleSet) -> Result<LogLikelihood> {
    let mut value = 0.0;
    for (n, &x) in samples.points().iter().enumerate() {
        let density = mixture_pdf(model, x)?;
        if density <= 0.0 {
            return Ok(LogLikelihood {
                value: f64::NEG_INFINITY,
                zero_density_sample: Some(n),
            });
        }
        value += density.ln();
    }
    Ok(LogLikelihood {
        value,
        zero_density_sample: None,
    })
}

/// Helpers shared by the M-step and the balloon estimator.
pub(crate) fn product_moment_about_center(
    comp: &GaussComponent,
    center: Vec2,
    s: SymMat2,
) -> Result<SymMat2> {
    let (prod_cov, offset) = product_with_offset(comp.mean, comp.cov, center, s)?;
    Ok(prod_cov + SymMat2::outer(offset))
}
