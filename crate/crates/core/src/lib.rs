//! Sparse bivariate Gaussian mixtures from a balloon-regularized generalized EM.
//!
//! The fit starts from one near-singular component per sample. Each outer
//! iteration solves a balloon estimator at every sample, then runs an E-step
//! and an M-step whose covariance update is regularized by the resulting
//! data-adaptive kernels. A single probability `P` controls how much mass
//! each balloon captures and thereby how sparse the final mixture becomes.
//! The same kernels also define an adaptive KDE baseline.

pub mod akde;
pub mod balloon;
pub mod cli;
pub mod error;
pub mod gauss2;
pub mod gem;
pub mod grid_io;
pub mod sampling;

pub use balloon::{regularizing_kernel, solve_balloon, solve_field, BalloonConfig, BalloonEntry, BalloonField};
pub use error::{Error, Result};
pub use gauss2::{
    gauss_pdf, kernel_eval, log_likelihood, mixture_pdf, overlap_prob, product_params, total_overlap,
    GaussComponent, MixtureModel, ProductParams, SampleSet, SymMat2, Vec2,
};
pub use gem::{
    additive_matrix, e_step, effective_count, fit, init_full_model, m_step, FitConfig, FitResult, FitTrace,
    Responsibilities,
};
