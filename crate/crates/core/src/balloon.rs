//! Balloon estimator.
//!
//! For every sample an isotropic balloon `S = σ²·I` is grown or shrunk until
//! the data-adapted kernel `R` fitted to `f·K(·|x, S)` captures a probability
//! mass `P` of the current density `f`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss2::{
    overlap_prob, product_moment_about_center, total_overlap, MixtureModel, SampleSet, SymMat2,
    Vec2,
};

/// Relative tolerance of the stopping rule `(p − P)² < (0.01·P)²`.
pub const STOP_TOLERANCE_REL: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct BalloonConfig {
    /// Probability mass `P` each kernel must capture, in `(0, 1]`.
    pub target_p: f64,
    /// Maximum number of multiplicative σ² updates per solve.
    pub max_inner_iters: usize,
    pub sigma2_init: f64,
    /// Upper bound on σ²; `None` resolves to `10⁶ · D²` from the sample bounding box.
    pub sigma2_cap: Option<f64>,
    /// Start each solve from the previous field instead of `sigma2_init`.
    pub warm_start: bool,
    /// Solve `P(x|S) = P` on the isotropic balloon rather than `P(x|R) = P`.
    pub target_on_balloon: bool,
}

impl BalloonConfig {
    pub fn new(target_p: f64) -> Self {
        BalloonConfig {
            target_p,
            max_inner_iters: 64,
            sigma2_init: 1.0,
            sigma2_cap: None,
            warm_start: false,
            target_on_balloon: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_p > 0.0 && self.target_p <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target probability {} must lie in (0, 1]",
                self.target_p
            )));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("max_inner_iters must be positive".into()));
        }
        if !(self.sigma2_init > 0.0 && self.sigma2_init.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma2_init {} must be positive",
                self.sigma2_init
            )));
        }
        if let Some(cap) = self.sigma2_cap {
            if !(cap > 0.0) {
                return Err(Error::InvalidConfig(format!("sigma2_cap {cap} must be positive")));
            }
        }
        Ok(())
    }

    /// σ² cap for the given samples: the configured value or `10⁶ · D²`.
    ///
    /// A degenerate bounding box (`D = 0`) uses `D = 1`.
    pub fn resolved_cap(&self, samples: &SampleSet) -> f64 {
        self.sigma2_cap.unwrap_or_else(|| {
            let d = samples.diagonal();
            let d = if d > 0.0 { d } else { 1.0 };
            1e6 * d * d
        })
    }

    fn cap_or_default(&self) -> f64 {
        self.sigma2_cap.unwrap_or(1e6)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalloonEntry {
    pub sigma2: f64,
    /// Regularizing kernel `R_n`.
    pub kernel: SymMat2,
    pub achieved_p: f64,
    /// Set when σ² hit its cap or the update budget ran out before the stopping rule held.
    pub saturated: bool,
    /// Number of multiplicative updates performed.
    pub inner_iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalloonField {
    pub entries: Vec<BalloonEntry>,
    pub target_p: f64,
}

impl BalloonField {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn kernels(&self) -> impl Iterator<Item = SymMat2> + '_ {
        self.entries.iter().map(|e| e.kernel)
    }

    pub fn saturated_count(&self) -> usize {
        self.entries.iter().filter(|e| e.saturated).count()
    }
}

/// Kernel fitted to the product of the density with `K(·|center, S)` and the
/// mass `P(center|S)` of that product.
fn kernel_and_mass(model: &MixtureModel, center: Vec2, s: SymMat2) -> Result<(SymMat2, f64)> {
    let mut weighted = SymMat2::ZERO;
    let mut total = 0.0;
    for comp in &model.components {
        let p = overlap_prob(comp, center, s)?;
        if p == 0.0 {
            continue;
        }
        weighted += product_moment_about_center(comp, center, s)? * p;
        total += p;
    }
    if !(total > 0.0) {
        return Err(Error::ZeroOverlap {
            x: center.x,
            y: center.y,
        });
    }
    Ok((weighted * (1.0 / total), total))
}

/// `R = Σ_m (P_m/P)·[Σ_{m|S} + (x − μ_{m|S})(x − μ_{m|S})ᵀ]`.
pub fn regularizing_kernel(model: &MixtureModel, center: Vec2, s: SymMat2) -> Result<SymMat2> {
    kernel_and_mass(model, center, s).map(|(r, _)| r)
}

fn evaluate(
    model: &MixtureModel,
    center: Vec2,
    sigma2: f64,
    on_balloon: bool,
) -> Result<(SymMat2, f64)> {
    let s = SymMat2::isotropic(sigma2);
    let (kernel, balloon_mass) = kernel_and_mass(model, center, s)?;
    let achieved = if on_balloon {
        balloon_mass
    } else {
        kernel.require_pd("regularizing kernel")?;
        total_overlap(model, center, kernel)?
    };
    Ok((kernel, achieved))
}

/// Multiplicative fixed-point iteration `σ² ← (P / p(σ²))·σ²`.
///
/// Uses `config.sigma2_cap` as given (or `10⁶` when unset); callers working
/// on a sample set go through [`solve_field`], which resolves the cap from
/// the data.
pub fn solve_balloon(
    model: &MixtureModel,
    center: Vec2,
    config: &BalloonConfig,
    warm_sigma2: Option<f64>,
) -> Result<BalloonEntry> {
    config.validate()?;
    solve_with_cap(model, center, config, config.cap_or_default(), warm_sigma2)
}

fn solve_with_cap(
    model: &MixtureModel,
    center: Vec2,
    config: &BalloonConfig,
    cap: f64,
    warm_sigma2: Option<f64>,
) -> Result<BalloonEntry> {
    let target = config.target_p;
    let tol = STOP_TOLERANCE_REL * target;
    let mut sigma2 = warm_sigma2.unwrap_or(config.sigma2_init).min(cap);
    let mut updates = 0;
    loop {
        let (kernel, achieved) = evaluate(model, center, sigma2, config.target_on_balloon)?;
        if !achieved.is_finite() || !kernel.is_finite() {
            return Err(Error::NonFiniteBalloon {
                x: center.x,
                y: center.y,
                sigma2,
                achieved_p: achieved,
            });
        }
        let converged = (achieved - target).powi(2) < tol * tol;
        let at_cap = sigma2 >= cap;
        if converged || updates >= config.max_inner_iters || (at_cap && achieved < target) {
            return Ok(BalloonEntry {
                sigma2,
                kernel,
                achieved_p: achieved,
                saturated: !converged,
                inner_iters: updates,
            });
        }
        let next = sigma2 * (target / achieved);
        if next.is_nan() || next <= 0.0 {
            return Err(Error::NonFiniteBalloon {
                x: center.x,
                y: center.y,
                sigma2: next,
                achieved_p: achieved,
            });
        }
        sigma2 = next.min(cap);
        updates += 1;
    }
}

/// Solves one balloon per sample, in sample order.
pub fn solve_field(
    model: &MixtureModel,
    samples: &SampleSet,
    config: &BalloonConfig,
    previous: Option<&BalloonField>,
) -> Result<BalloonField> {
    config.validate()?;
    let cap = config.resolved_cap(samples);
    let warm = match previous {
        Some(prev) if config.warm_start => {
            if prev.len() != samples.len() {
                return Err(Error::LengthMismatch {
                    what: "previous balloon field",
                    got: prev.len(),
                    expected: samples.len(),
                });
            }
            Some(prev)
        }
        _ => None,
    };
    let entries = samples
        .points()
        .par_iter()
        .enumerate()
        .map(|(n, &x)| {
            let start = warm.map(|prev| prev.entries[n].sigma2);
            solve_with_cap(model, x, config, cap, start).map_err(|e| e.at_sample(n))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BalloonField {
        entries,
        target_p: config.target_p,
    })
}
