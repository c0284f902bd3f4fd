//! Deterministic sample generation.
//!
//! All randomness comes from a ChaCha8 stream (`rand_chacha::ChaCha8Rng`)
//! seeded with `seed_from_u64(seed)`. Each uniform variate takes one 64-bit
//! output `w` and maps it to `(w >> 11) · 2⁻⁵³ ∈ [0, 1)`. A point in the unit
//! square consumes two variates, `x` first. A mixture draw consumes three:
//! one selects the component by cumulative prior, two feed a Box-Muller
//! transform `z = √(−2 ln(1 − u₁))·(cos 2πu₂, sin 2πu₂)` that is mapped
//! through the lower Cholesky factor of the component covariance.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gauss2::{MixtureModel, Vec2};

pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        UniformStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Where generated samples come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    UnitSquare,
    Mixture(MixtureModel),
}

pub fn unit_square(seed: u64, n: usize) -> Vec<Vec2> {
    let mut stream = UniformStream::new(seed);
    (0..n)
        .map(|_| {
            let x = stream.next_f64();
            let y = stream.next_f64();
            Vec2::new(x, y)
        })
        .collect()
}

pub fn from_mixture(seed: u64, n: usize, model: &MixtureModel) -> Result<Vec<Vec2>> {
    model.validate()?;
    let mut factors = Vec::with_capacity(model.len());
    for comp in &model.components {
        let l11 = comp.cov.a.sqrt();
        let l21 = comp.cov.b / l11;
        let l22 = (comp.cov.c - l21 * l21).sqrt();
        if !(l22 > 0.0) {
            return Err(Error::InvalidConfig("covariance has no Cholesky factor".into()));
        }
        factors.push((l11, l21, l22));
    }
    let mut stream = UniformStream::new(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = stream.next_f64();
        let u1 = stream.next_f64();
        let u2 = stream.next_f64();
        let mut acc = 0.0;
        let mut chosen = model.len() - 1;
        for (m, comp) in model.components.iter().enumerate() {
            acc += comp.weight;
            if pick < acc {
                chosen = m;
                break;
            }
        }
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        let (z0, z1) = (radius * c, radius * s);
        let (l11, l21, l22) = factors[chosen];
        let mean = model.components[chosen].mean;
        points.push(Vec2::new(mean.x + l11 * z0, mean.y + l21 * z0 + l22 * z1));
    }
    Ok(points)
}

pub fn generate(seed: u64, n: usize, shape: &Shape) -> Result<Vec<Vec2>> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    match shape {
        Shape::UnitSquare => Ok(unit_square(seed, n)),
        Shape::Mixture(model) => from_mixture(seed, n, model),
    }
}
