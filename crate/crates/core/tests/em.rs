mod common;

use balloon_gmm::gem::{m_step_detailed, MStepOptions};
use balloon_gmm::{
    additive_matrix, e_step, fit, log_likelihood, m_step, solve_field, BalloonConfig, FitConfig,
    GaussComponent, MixtureModel, SampleSet, SymMat2, Vec2,
};
use common::{arr, m2, pdf, product_moments, PlainEm, Rng};
use proptest::prelude::*;

const OPTIONS: MStepOptions = MStepOptions {
    psd_floor: 1e-12,
    prune_threshold: 1e-12,
};

fn random_samples(rng: &mut Rng, n: usize) -> SampleSet {
    SampleSet::new((0..n).map(|_| rng.point(0.0, 1.0)).collect()).unwrap()
}

#[test]
fn e_step_matches_direct_normalization() {
    let mut rng = Rng::new(21);
    for _ in 0..50 {
        let model = rng.model(4, 1.0, 0.05, 1.0);
        let samples = SampleSet::new((0..6).map(|_| rng.point(-1.0, 1.0)).collect()).unwrap();
        let resp = e_step(&model, &samples).unwrap();
        for (n, x) in samples.points().iter().enumerate() {
            let terms: Vec<f64> = model
                .components
                .iter()
                .map(|c| c.weight * pdf(arr(*x), arr(c.mean), m2(c.cov)))
                .collect();
            let total: f64 = terms.iter().sum();
            for (m, t) in terms.iter().enumerate() {
                assert!((resp.get(m, n) - t / total).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn e_step_normalizes_far_tail_columns() {
    let model = MixtureModel::new(vec![
        GaussComponent::new(0.5, Vec2::ZERO, SymMat2::isotropic(1e-4)),
        GaussComponent::new(0.5, Vec2::new(1.0, 0.0), SymMat2::isotropic(1e-4)),
    ])
    .unwrap();
    let samples = SampleSet::new(vec![Vec2::new(30.0, 0.0)]).unwrap();
    let resp = e_step(&model, &samples).unwrap();
    assert!((resp.column_sum(0) - 1.0).abs() < 1e-12);
    assert!(resp.get(1, 0) > 0.999);
}

#[test]
fn plain_em_matches_textbook_on_three_components() {
    let mut rng = Rng::new(22);
    let samples = random_samples(&mut rng, 20);
    let xs: Vec<[f64; 2]> = samples.points().iter().map(|p| arr(*p)).collect();
    let starts = [0, 7, 14];
    let mut model = MixtureModel::new(
        starts
            .iter()
            .map(|&i| GaussComponent::new(1.0 / 3.0, samples.points()[i], SymMat2::isotropic(0.1)))
            .collect(),
    )
    .unwrap();
    let mut oracle = PlainEm {
        weights: vec![1.0 / 3.0; 3],
        means: starts.iter().map(|&i| xs[i]).collect(),
        covs: vec![[[0.1, 0.0], [0.0, 0.1]]; 3],
    };
    let mut last = f64::NEG_INFINITY;
    for _ in 0..20 {
        let resp = e_step(&model, &samples).unwrap();
        model = m_step(&model, &samples, &resp, None, &OPTIONS).unwrap();
        oracle.step(&xs);
        assert!(oracle.weights.iter().all(|w| w.is_finite()), "instance degenerated");
        let ll = log_likelihood(&model, &samples).unwrap().value;
        assert!(ll >= last - 1e-9 * last.abs());
        last = ll;
    }
    assert_eq!(model.len(), 3);
    for (m, c) in model.components.iter().enumerate() {
        assert!((c.weight - oracle.weights[m]).abs() < 1e-8);
        assert!((c.mean - Vec2::new(oracle.means[m][0], oracle.means[m][1])).norm() < 1e-8);
        let want = oracle.covs[m];
        assert!((c.cov - SymMat2::new(want[0][0], want[0][1], want[1][1])).frobenius() < 1e-8);
    }
    assert!((last - oracle.log_likelihood(&xs)).abs() < 1e-6);
}

#[test]
fn additive_matrix_equals_kernel_minus_product_moment() {
    let mut rng = Rng::new(23);
    for _ in 0..10 {
        let comp = GaussComponent::new(1.0, rng.point(-1.0, 1.0), rng.spd(0.05, 1.0, 20.0));
        let x = rng.point(-1.0, 1.0);
        let r = rng.spd(0.05, 1.0, 20.0);
        let q = product_moments(&comp, x, r);
        let moment = SymMat2::new(q[1] / q[0], q[2] / q[0], q[3] / q[0]);
        let got = additive_matrix(&comp, x, r).unwrap();
        assert!((got - (r - moment)).frobenius() < 1e-6 * r.frobenius());
    }
}

#[test]
fn regularized_step_keeps_means_inside_sample_box() {
    let mut rng = Rng::new(24);
    let samples = random_samples(&mut rng, 20);
    let config = FitConfig::new(2.0 / 20.0);
    let mut model = balloon_gmm::init_full_model(&samples, &config).unwrap();
    for _ in 0..20 {
        let field = solve_field(&model, &samples, &config.balloon, None).unwrap();
        let resp = e_step(&model, &samples).unwrap();
        let out = m_step_detailed(&model, &samples, &resp, Some(&field), &OPTIONS).unwrap();
        model = out.model;
        let (lo, hi) = (samples.min(), samples.max());
        for c in &model.components {
            assert!(c.mean.x >= lo.x && c.mean.x <= hi.x && c.mean.y >= lo.y && c.mean.y <= hi.y);
            assert!(c.cov.is_positive_definite());
        }
        assert!((model.total_weight() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn pruned_components_are_removed_and_priors_renormalized() {
    let samples = SampleSet::new(vec![Vec2::ZERO, Vec2::new(0.1, 0.0)]).unwrap();
    let model = MixtureModel::new(vec![
        GaussComponent::new(0.5, Vec2::ZERO, SymMat2::isotropic(0.01)),
        GaussComponent::new(0.5, Vec2::new(50.0, 0.0), SymMat2::isotropic(0.01)),
    ])
    .unwrap();
    let resp = e_step(&model, &samples).unwrap();
    let out = m_step_detailed(&model, &samples, &resp, None, &OPTIONS).unwrap();
    assert_eq!(out.pruned, 1);
    assert_eq!(out.model.len(), 1);
    assert_eq!(out.model.components[0].weight, 1.0);
}

fn sorted_components(model: &MixtureModel) -> Vec<GaussComponent> {
    let mut comps = model.components.clone();
    comps.sort_by(|a, b| (a.mean.x, a.mean.y).partial_cmp(&(b.mean.x, b.mean.y)).unwrap());
    comps
}

#[test]
fn fit_does_not_depend_on_sample_order() {
    let mut rng = Rng::new(25);
    let samples = random_samples(&mut rng, 16);
    let mut reversed: Vec<Vec2> = samples.points().to_vec();
    reversed.reverse();
    let reversed = SampleSet::new(reversed).unwrap();
    let mut config = FitConfig::new(2.0 / 16.0);
    config.outer_iters = 60;
    let a = sorted_components(&fit(&samples, &config).unwrap().model);
    let b = sorted_components(&fit(&reversed, &config).unwrap().model);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x.weight - y.weight).abs() < 1e-9);
        assert!((x.mean - y.mean).norm() < 1e-9);
        assert!((x.cov - y.cov).frobenius() < 1e-9);
    }
}

#[test]
fn fit_trace_has_one_record_per_iteration() {
    let mut rng = Rng::new(26);
    let samples = random_samples(&mut rng, 10);
    let mut config = FitConfig::new(0.1);
    config.outer_iters = 25;
    let result = fit(&samples, &config).unwrap();
    assert_eq!(result.trace.records.len(), 25);
    assert_eq!(result.balloons.len(), 10);
    for (i, r) in result.trace.records.iter().enumerate() {
        assert_eq!(r.iteration, i);
        assert!(r.log_likelihood.is_finite());
        assert!(r.effective_count >= 1 && r.effective_count <= 10);
    }
}

#[test]
fn warm_started_balloons_still_meet_target() {
    let mut rng = Rng::new(27);
    let samples = random_samples(&mut rng, 16);
    let mut config = FitConfig::new(1.0 / 16.0);
    config.outer_iters = 40;
    config.balloon = BalloonConfig {
        warm_start: true,
        ..BalloonConfig::new(1.0 / 16.0)
    };
    let result = fit(&samples, &config).unwrap();
    for e in &result.balloons.entries {
        if !e.saturated {
            assert!((e.achieved_p - config.target_p).powi(2) < (0.01 * config.target_p).powi(2));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plain_em_step_preserves_invariants(seed in any::<u64>(), n in 3usize..12, m in 1usize..5) {
        let mut rng = Rng::new(seed);
        let samples = random_samples(&mut rng, n);
        let model = rng.model(m, 1.0, 0.01, 0.5).translated(Vec2::new(0.5, 0.5));
        let resp = e_step(&model, &samples).unwrap();
        for k in 0..n {
            prop_assert!((resp.column_sum(k) - 1.0).abs() < 1e-12);
        }
        let next = m_step(&model, &samples, &resp, None, &OPTIONS).unwrap();
        prop_assert!((next.total_weight() - 1.0).abs() < 1e-9);
        let (lo, hi) = (samples.min(), samples.max());
        for c in &next.components {
            prop_assert!(c.cov.is_positive_definite());
            prop_assert!(c.mean.x >= lo.x - 1e-12 && c.mean.x <= hi.x + 1e-12);
            prop_assert!(c.mean.y >= lo.y - 1e-12 && c.mean.y <= hi.y + 1e-12);
        }
    }
}
