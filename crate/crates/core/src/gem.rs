//! Regularized generalized EM.
//!
//! Starts from one near-singular component per sample and alternates the
//! balloon estimator with an E-step and an M-step whose covariance update
//! carries the additive matrices `R_{n|m}`. Components whose prior falls
//! below the pruning threshold are removed.

use rayon::prelude::*;

use crate::balloon::{solve_field, BalloonConfig, BalloonField};
use crate::error::{Error, Result};
use crate::gauss2::{
    log_likelihood, product_moment_about_center, GaussComponent, MixtureModel, SampleSet, SymMat2,
    Vec2,
};

/// Initial standard deviation used when every sample sits at one point.
pub const DEGENERATE_INIT_STD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub target_p: f64,
    pub outer_iters: usize,
    /// Initial `Σ_m = (init_eps_rel · D)² · I`.
    pub init_eps_rel: f64,
    pub prune_threshold: f64,
    /// A component is effective when `π_m > effective_threshold_rel / N`.
    pub effective_threshold_rel: f64,
    /// Components closer than this (Mahalanobis distance between means, and
    /// relative Frobenius distance between covariances) are fused after every
    /// M-step. Zero disables fusion.
    pub merge_tol: f64,
    /// Recorded for provenance; the fit itself draws no random numbers.
    pub seed: u64,
    /// Stop once the largest parameter change drops below this value.
    pub early_stop_tol: Option<f64>,
    pub balloon: BalloonConfig,
}

impl FitConfig {
    pub fn new(target_p: f64) -> Self {
        FitConfig {
            target_p,
            outer_iters: 1000,
            init_eps_rel: 1e-3,
            prune_threshold: 1e-12,
            effective_threshold_rel: 0.01,
            merge_tol: 1e-3,
            seed: 0,
            early_stop_tol: None,
            balloon: BalloonConfig::new(target_p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(Error::InvalidConfig("outer_iters must be at least 1".into()));
        }
        for (name, v) in [
            ("init_eps_rel", self.init_eps_rel),
            ("prune_threshold", self.prune_threshold),
            ("effective_threshold_rel", self.effective_threshold_rel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.merge_tol >= 0.0 && self.merge_tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("merge_tol must be non-negative, got {}", self.merge_tol)));
        }
        if let Some(tol) = self.early_stop_tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidConfig(format!("early_stop_tol must be positive, got {tol}")));
            }
        }
        if self.balloon.target_p != self.target_p {
            return Err(Error::InvalidConfig(format!(
                "balloon target {} differs from fit target {}",
                self.balloon.target_p, self.target_p
            )));
        }
        self.balloon.validate()
    }

    /// Standard deviation of the initial components.
    pub fn init_std(&self, samples: &SampleSet) -> f64 {
        let d = samples.diagonal();
        if d > 0.0 {
            self.init_eps_rel * d
        } else {
            DEGENERATE_INIT_STD
        }
    }

    /// Eigenvalue floor of the covariance projection: `1e-10 · D²` under the
    /// default `init_eps_rel`, i.e. `1e-4` times the initial variance.
    pub fn psd_floor(&self, samples: &SampleSet) -> f64 {
        let s = self.init_std(samples);
        1e-4 * s * s
    }
}

/// Column-normalized responsibilities, stored row-major (`M` rows × `N` columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    n_components: usize,
    n_samples: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_components = rows.len();
        let n_samples = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_samples) {
            return Err(Error::LengthMismatch {
                what: "responsibility row",
                got: bad.len(),
                expected: n_samples,
            });
        }
        Ok(Responsibilities {
            n_components,
            n_samples,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.n_samples + n]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_samples..(m + 1) * self.n_samples]
    }

    pub fn column_sum(&self, n: usize) -> f64 {
        (0..self.n_components).map(|m| self.get(m, n)).sum()
    }
}

/// One record per outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub effective_count: usize,
    pub max_delta: f64,
    pub psd_projections: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitTrace {
    pub records: Vec<TraceRecord>,
}

/// One component per sample: `μ_m = x_m`, `π_m = 1/N`, `Σ_m = (ε·D)²·I`.
pub fn init_full_model(samples: &SampleSet, config: &FitConfig) -> Result<MixtureModel> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let std = config.init_std(samples);
    let cov = SymMat2::isotropic(std * std);
    let weight = 1.0 / samples.len() as f64;
    Ok(MixtureModel {
        components: samples
            .points()
            .iter()
            .map(|&x| GaussComponent::new(weight, x, cov))
            .collect(),
    })
}

/// `P_{m,n} ∝ π_m N(x_n|μ_m,Σ_m)`, normalized over components.
///
/// Terms are combined in the log domain so that columns far out in the tails
/// of every component still normalize.
pub fn e_step(model: &MixtureModel, samples: &SampleSet) -> Result<Responsibilities> {
    let n_components = model.len();
    let n_samples = samples.len();
    let mut prepared = Vec::with_capacity(n_components);
    for comp in &model.components {
        comp.cov.require_pd("component covariance")?;
        let log_norm = comp.weight.ln() - (2.0 * std::f64::consts::PI).ln() - 0.5 * comp.cov.det().ln();
        prepared.push((comp, log_norm));
    }
    let columns = samples
        .points()
        .par_iter()
        .enumerate()
        .map(|(n, &x)| {
            let mut logs = Vec::with_capacity(n_components);
            for (comp, log_norm) in &prepared {
                let q = comp.cov.inv_quad_form(x - comp.mean)?;
                logs.push(log_norm - 0.5 * q);
            }
            let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !peak.is_finite() {
                return Err(Error::UnreachableSample { index: n });
            }
            let mut total = 0.0;
            for l in logs.iter_mut() {
                *l = (*l - peak).exp();
                total += *l;
            }
            for l in logs.iter_mut() {
                *l /= total;
            }
            Ok(logs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![0.0; n_components * n_samples];
    for (n, col) in columns.iter().enumerate() {
        for (m, &v) in col.iter().enumerate() {
            values[m * n_samples + n] = v;
        }
    }
    Ok(Responsibilities {
        n_components,
        n_samples,
        values,
    })
}

/// `R_{n|m} = R_n − [Σ_{m|R_n} + (x_n − μ_{m|R_n})(x_n − μ_{m|R_n})ᵀ]`; may be indefinite.
pub fn additive_matrix(component: &GaussComponent, x: Vec2, kernel: SymMat2) -> Result<SymMat2> {
    Ok(kernel - product_moment_about_center(component, x, kernel)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MStepOptions {
    pub psd_floor: f64,
    pub prune_threshold: f64,
}

/// Result of one M-step with its bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct MStepOutcome {
    pub model: MixtureModel,
    pub psd_projections: usize,
    pub pruned: usize,
    /// Largest absolute change of any prior, mean or covariance entry among
    /// the components that survived the step.
    pub max_delta: f64,
}

/// M-step. `balloons = None` drops the additive matrices, giving plain EM.
pub fn m_step(
    model: &MixtureModel,
    samples: &SampleSet,
    resp: &Responsibilities,
    balloons: Option<&BalloonField>,
    options: &MStepOptions,
) -> Result<MixtureModel> {
    m_step_detailed(model, samples, resp, balloons, options).map(|o| o.model)
}

pub fn m_step_detailed(
    model: &MixtureModel,
    samples: &SampleSet,
    resp: &Responsibilities,
    balloons: Option<&BalloonField>,
    options: &MStepOptions,
) -> Result<MStepOutcome> {
    let n = samples.len();
    if resp.n_components() != model.len() {
        return Err(Error::LengthMismatch {
            what: "responsibility rows",
            got: resp.n_components(),
            expected: model.len(),
        });
    }
    if resp.n_samples() != n {
        return Err(Error::LengthMismatch {
            what: "responsibility columns",
            got: resp.n_samples(),
            expected: n,
        });
    }
    if let Some(field) = balloons {
        if field.len() != n {
            return Err(Error::LengthMismatch {
                what: "balloon field",
                got: field.len(),
                expected: n,
            });
        }
    }
    let points = samples.points();

    // (component, projected) per surviving index; `None` marks a pruned component.
    let updated = model
        .components
        .par_iter()
        .enumerate()
        .map(|(m, old)| -> Result<Option<(GaussComponent, bool)>> {
            let row = resp.row(m);
            let mass: f64 = row.iter().sum();
            let weight = mass / n as f64;
            if !(weight >= options.prune_threshold) || mass == 0.0 {
                return Ok(None);
            }
            let mut mean_acc = Vec2::ZERO;
            for (&p, &x) in row.iter().zip(points) {
                mean_acc += x * p;
            }
            let mean = mean_acc * (1.0 / mass);
            let mut cov_acc = SymMat2::ZERO;
            for (idx, (&p, &x)) in row.iter().zip(points).enumerate() {
                if p == 0.0 {
                    continue;
                }
                let mut term = SymMat2::outer(x - mean);
                if let Some(field) = balloons {
                    term += additive_matrix(old, x, field.entries[idx].kernel)
                        .map_err(|e| e.at_sample(idx))?;
                }
                cov_acc += term * p;
            }
            let raw = cov_acc * (1.0 / mass);
            let (cov, projected) = raw.floor_eigenvalues(options.psd_floor);
            Ok(Some((GaussComponent::new(weight, mean, cov), projected)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut components = Vec::with_capacity(model.len());
    let mut psd_projections = 0;
    let mut pruned = 0;
    let mut max_delta: f64 = 0.0;
    for (old, new) in model.components.iter().zip(&updated) {
        match new {
            Some((comp, projected)) => {
                psd_projections += usize::from(*projected);
                max_delta = max_delta
                    .max((comp.weight - old.weight).abs())
                    .max((comp.mean.x - old.mean.x).abs())
                    .max((comp.mean.y - old.mean.y).abs())
                    .max((comp.cov.a - old.cov.a).abs())
                    .max((comp.cov.b - old.cov.b).abs())
                    .max((comp.cov.c - old.cov.c).abs());
                components.push(*comp);
            }
            None => pruned += 1,
        }
    }
    if components.is_empty() {
        return Err(Error::InvalidConfig("every component was pruned".into()));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if pruned > 0 || total != 1.0 {
        for c in components.iter_mut() {
            c.weight /= total;
        }
    }
    Ok(MStepOutcome {
        model: MixtureModel { components },
        psd_projections,
        pruned,
        max_delta,
    })
}

fn coincide(a: &GaussComponent, b: &GaussComponent, tol: f64) -> bool {
    let avg = (a.cov + b.cov) * 0.5;
    let Ok(q) = avg.inv_quad_form(a.mean - b.mean) else {
        return false;
    };
    q < tol * tol && (a.cov - b.cov).frobenius() < tol * avg.frobenius()
}

/// Fuses components that coincide to within `tol`.
///
/// Identical components split their mass in a fixed ratio under EM and so
/// never separate; this folds them into one. Each group is keyed on its
/// lowest-index member, compared with the original parameters, and replaced
/// by a moment-preserving merge placed at that member's position. Returns the
/// model and the number of components removed.
pub fn merge_coincident(model: &MixtureModel, tol: f64) -> (MixtureModel, usize) {
    if tol <= 0.0 || model.len() < 2 {
        return (model.clone(), 0);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (m, comp) in model.components.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|g| coincide(&model.components[g[0]], comp, tol))
        {
            Some(g) => g.push(m),
            None => groups.push(vec![m]),
        }
    }
    if groups.len() == model.len() {
        return (model.clone(), 0);
    }
    let components = groups
        .iter()
        .map(|g| {
            if g.len() == 1 {
                return model.components[g[0]];
            }
            let weight: f64 = g.iter().map(|&m| model.components[m].weight).sum();
            let mut mean = Vec2::ZERO;
            for &m in g {
                let c = &model.components[m];
                mean += c.mean * (c.weight / weight);
            }
            let mut cov = SymMat2::ZERO;
            for &m in g {
                let c = &model.components[m];
                cov += (c.cov + SymMat2::outer(c.mean - mean)) * (c.weight / weight);
            }
            GaussComponent::new(weight, mean, cov)
        })
        .collect();
    (MixtureModel { components }, model.len() - groups.len())
}

/// Number of components with `π_m > threshold_rel / n_samples`.
pub fn effective_count(model: &MixtureModel, n_samples: usize, threshold_rel: f64) -> usize {
    let threshold = threshold_rel / n_samples as f64;
    model.components.iter().filter(|c| c.weight > threshold).count()
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: MixtureModel,
    pub balloons: BalloonField,
    pub trace: FitTrace,
}

/// Runs `outer_iters` rounds of balloons → E-step → M-step from the full model.
pub fn fit(samples: &SampleSet, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let model = init_full_model(samples, config)?;
    fit_from(samples, config, model)
}

/// Same as [`fit`], starting from a caller-supplied model.
pub fn fit_from(samples: &SampleSet, config: &FitConfig, mut model: MixtureModel) -> Result<FitResult> {
    config.validate()?;
    model.validate()?;
    let options = MStepOptions {
        psd_floor: config.psd_floor(samples),
        prune_threshold: config.prune_threshold,
    };
    let mut trace = FitTrace::default();
    let mut balloons: Option<BalloonField> = None;
    for iteration in 0..config.outer_iters {
        let step = || -> Result<(BalloonField, MStepOutcome)> {
            let field = solve_field(&model, samples, &config.balloon, balloons.as_ref())?;
            let resp = e_step(&model, samples)?;
            let outcome = m_step_detailed(&model, samples, &resp, Some(&field), &options)?;
            Ok((field, outcome))
        };
        let (field, outcome) = step().map_err(|e| e.at_iteration(iteration))?;
        model = merge_coincident(&outcome.model, config.merge_tol).0;
        balloons = Some(field);
        let ll = log_likelihood(&model, samples).map_err(|e| e.at_iteration(iteration))?;
        trace.records.push(TraceRecord {
            iteration,
            log_likelihood: ll.value,
            effective_count: effective_count(&model, samples.len(), config.effective_threshold_rel),
            max_delta: outcome.max_delta,
            psd_projections: outcome.psd_projections,
        });
        if let Some(tol) = config.early_stop_tol {
            if outcome.max_delta < tol {
                break;
            }
        }
    }
    Ok(FitResult {
        model,
        balloons: balloons.expect("outer_iters >= 1"),
        trace,
    })
}
