//! Test oracles written independently of the library's 2×2 algebra.
#![allow(dead_code)]

use balloon_gmm::{GaussComponent, MixtureModel, SymMat2, Vec2};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M2 = [[f64; 2]; 2];

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    /// SPD matrix with eigenvalues in `[lo, hi]` and condition number at most `max_cond`.
    pub fn spd(&mut self, lo: f64, hi: f64, max_cond: f64) -> SymMat2 {
        let big = self.uniform(lo.ln(), hi.ln()).exp();
        let small_lo = (big / max_cond).max(lo);
        let small = self.uniform(small_lo.ln(), big.ln()).exp();
        let t = self.uniform(0.0, std::f64::consts::PI);
        let (s, c) = t.sin_cos();
        SymMat2::new(
            big * c * c + small * s * s,
            (big - small) * c * s,
            big * s * s + small * c * c,
        )
    }

    pub fn point(&mut self, lo: f64, hi: f64) -> Vec2 {
        Vec2::new(self.uniform(lo, hi), self.uniform(lo, hi))
    }

    pub fn model(&mut self, m: usize, spread: f64, lo: f64, hi: f64) -> MixtureModel {
        let raw: Vec<f64> = (0..m).map(|_| self.uniform(0.1, 1.0)).collect();
        let total: f64 = raw.iter().sum();
        MixtureModel {
            components: raw
                .iter()
                .map(|&w| GaussComponent::new(w / total, self.point(-spread, spread), self.spd(lo, hi, 1e3)))
                .collect(),
        }
    }
}

pub fn m2(s: SymMat2) -> M2 {
    [[s.a, s.b], [s.b, s.c]]
}

pub fn det(m: M2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn inv(m: M2) -> M2 {
    let d = det(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

pub fn quad(m: M2, v: [f64; 2]) -> f64 {
    let mut q = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            q += v[i] * m[i][j] * v[j];
        }
    }
    q
}

pub fn pdf(x: [f64; 2], mu: [f64; 2], cov: M2) -> f64 {
    let d = [x[0] - mu[0], x[1] - mu[1]];
    (-0.5 * quad(inv(cov), d)).exp() / (2.0 * std::f64::consts::PI * det(cov).sqrt())
}

pub fn kernel(r: [f64; 2], center: [f64; 2], k: M2) -> f64 {
    let d = [r[0] - center[0], r[1] - center[1]];
    (-0.5 * quad(inv(k), d)).exp()
}

pub fn arr(v: Vec2) -> [f64; 2] {
    [v.x, v.y]
}

/// 2-D composite trapezoid rule of `f` over `[c ± half]` with `n[axis]` nodes.
pub fn trapezoid<F: FnMut([f64; 2]) -> [f64; 4]>(center: [f64; 2], half: [f64; 2], n: [usize; 2], mut f: F) -> [f64; 4] {
    let hx = 2.0 * half[0] / (n[0] - 1) as f64;
    let hy = 2.0 * half[1] / (n[1] - 1) as f64;
    let mut acc = [0.0; 4];
    for i in 0..n[0] {
        let wx = if i == 0 || i == n[0] - 1 { 0.5 } else { 1.0 };
        let x = center[0] - half[0] + i as f64 * hx;
        for j in 0..n[1] {
            let wy = if j == 0 || j == n[1] - 1 { 0.5 } else { 1.0 };
            let y = center[1] - half[1] + j as f64 * hy;
            let v = f([x, y]);
            for k in 0..4 {
                acc[k] += wx * wy * v[k];
            }
        }
    }
    for a in acc.iter_mut() {
        *a *= hx * hy;
    }
    acc
}

/// Box on which `N(·|mu, cov)·K(·|x, s)` is integrated: centered on the
/// product's mode, `±8` marginal standard deviations per axis. Also returns
/// the node count per axis, chosen so the step stays below half of the
/// conditional standard deviation along that axis.
pub fn product_box(mu: [f64; 2], cov: M2, x: [f64; 2], s: M2) -> ([f64; 2], [f64; 2], [usize; 2]) {
    let (ci, si) = (inv(cov), inv(s));
    let prec = [
        [ci[0][0] + si[0][0], ci[0][1] + si[0][1]],
        [ci[1][0] + si[1][0], ci[1][1] + si[1][1]],
    ];
    let pc = inv(prec);
    let rhs = [
        ci[0][0] * mu[0] + ci[0][1] * mu[1] + si[0][0] * x[0] + si[0][1] * x[1],
        ci[1][0] * mu[0] + ci[1][1] * mu[1] + si[1][0] * x[0] + si[1][1] * x[1],
    ];
    let mode = [
        pc[0][0] * rhs[0] + pc[0][1] * rhs[1],
        pc[1][0] * rhs[0] + pc[1][1] * rhs[1],
    ];
    let half = [8.0 * pc[0][0].sqrt(), 8.0 * pc[1][1].sqrt()];
    let nodes = |axis: usize| {
        let cond = 1.0 / prec[axis][axis].sqrt();
        ((2.0 * half[axis] / (0.5 * cond)).ceil() as usize + 1).max(121)
    };
    (mode, half, [nodes(0), nodes(1)])
}

/// `∬ N(r|μ,Σ) K(r|x,S) [1, (r−x)(r−x)ᵀ entries] dr` for one component.
pub fn product_moments(comp: &GaussComponent, x: Vec2, s: SymMat2) -> [f64; 4] {
    let (mu, cov, xs, sm) = (arr(comp.mean), m2(comp.cov), arr(x), m2(s));
    let (center, half, nodes) = product_box(mu, cov, xs, sm);
    trapezoid(center, half, nodes, |r| {
        let w = pdf(r, mu, cov) * kernel(r, xs, sm);
        let d = [r[0] - xs[0], r[1] - xs[1]];
        [w, w * d[0] * d[0], w * d[0] * d[1], w * d[1] * d[1]]
    })
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

/// Textbook EM on plain arrays: `(weights, means, covariances)`.
pub struct PlainEm {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub covs: Vec<M2>,
}

impl PlainEm {
    pub fn step(&mut self, xs: &[[f64; 2]]) {
        let k = self.weights.len();
        let n = xs.len();
        let mut resp = vec![vec![0.0; n]; k];
        for (j, x) in xs.iter().enumerate() {
            let mut total = 0.0;
            for m in 0..k {
                resp[m][j] = self.weights[m] * pdf(*x, self.means[m], self.covs[m]);
                total += resp[m][j];
            }
            for row in resp.iter_mut() {
                row[j] /= total;
            }
        }
        for m in 0..k {
            let nk: f64 = resp[m].iter().sum();
            let mut mu = [0.0; 2];
            for (j, x) in xs.iter().enumerate() {
                mu[0] += resp[m][j] * x[0];
                mu[1] += resp[m][j] * x[1];
            }
            mu = [mu[0] / nk, mu[1] / nk];
            let mut c = [[0.0; 2]; 2];
            for (j, x) in xs.iter().enumerate() {
                let d = [x[0] - mu[0], x[1] - mu[1]];
                for a in 0..2 {
                    for b in 0..2 {
                        c[a][b] += resp[m][j] * d[a] * d[b];
                    }
                }
            }
            for row in c.iter_mut() {
                for v in row.iter_mut() {
                    *v /= nk;
                }
            }
            self.weights[m] = nk / n as f64;
            self.means[m] = mu;
            self.covs[m] = c;
        }
    }

    pub fn log_likelihood(&self, xs: &[[f64; 2]]) -> f64 {
        xs.iter()
            .map(|x| {
                (0..self.weights.len())
                    .map(|m| self.weights[m] * pdf(*x, self.means[m], self.covs[m]))
                    .sum::<f64>()
                    .ln()
            })
            .sum()
    }
}
