//! Adaptive KDE built directly from the balloon kernels.
//!
//! One density-normalized Gaussian per sample, centered on the sample with
//! covariance `R_n` and weight `1/N`. No EM is involved.

use crate::balloon::BalloonField;
use crate::error::{Error, Result};
use crate::gauss2::{gauss_pdf, GaussComponent, MixtureModel, SampleSet, SymMat2, Vec2};

#[derive(Clone, Debug, PartialEq)]
pub struct AkdeModel {
    samples: SampleSet,
    kernels: Vec<SymMat2>,
}

impl AkdeModel {
    pub fn new(samples: SampleSet, kernels: Vec<SymMat2>) -> Result<Self> {
        if kernels.len() != samples.len() {
            return Err(Error::LengthMismatch {
                what: "kernel list",
                got: kernels.len(),
                expected: samples.len(),
            });
        }
        for k in &kernels {
            k.require_pd("adaptive kernel")?;
        }
        Ok(AkdeModel { samples, kernels })
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn kernels(&self) -> &[SymMat2] {
        &self.kernels
    }

    /// The same density written as a uniform-weight mixture.
    pub fn to_mixture(&self) -> MixtureModel {
        let weight = 1.0 / self.samples.len() as f64;
        MixtureModel {
            components: self
                .samples
                .points()
                .iter()
                .zip(&self.kernels)
                .map(|(&x, &k)| GaussComponent::new(weight, x, k))
                .collect(),
        }
    }
}

pub fn build_akde(samples: &SampleSet, balloons: &BalloonField) -> Result<AkdeModel> {
    AkdeModel::new(samples.clone(), balloons.kernels().collect())
}

/// `(1/N) Σ_n N(x | x_n, R_n)`
pub fn akde_pdf(model: &AkdeModel, x: Vec2) -> Result<f64> {
    let mut total = 0.0;
    for (&center, &kernel) in model.samples.points().iter().zip(&model.kernels) {
        total += gauss_pdf(x, center, kernel)?;
    }
    Ok(total / model.samples.len() as f64)
}
