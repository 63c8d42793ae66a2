mod common;

use bitfit_core::{
    best_delta_m, fit, numeric_gradient, prune, q_total, repair_delta_m, Dataset, DeltaM, Error, FitConfig, FitResult,
    MixtureParams, Scheme, StageReport, VariationMode,
};
use common::*;
use rand::Rng;

#[test]
fn numeric_gradient_of_quadratic_bowl() {
    let g = numeric_gradient(|x: &[f64]| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-6);
    assert!((g.values[0] - 2.0).abs() < 1e-6);
    assert!((g.values[1] - 4.0).abs() < 1e-6);
    assert!(!g.any_undefined());
}

#[test]
fn numeric_gradient_of_q_is_step_consistent() {
    let mut r = rng(31);
    let p = random_params(&mut r, Scheme::SquaredNorm, 2, 1);
    let data = sample(&mut r, &p, 40);
    let n_p = p.n_params();
    let f = |theta: &[f64]| {
        let params = p.with_values(&theta[..n_p]).unwrap();
        let dm = DeltaM::from_log(theta[n_p..].to_vec()).unwrap();
        q_total(&data, &params, &dm, VariationMode::Global).unwrap().q_total
    };
    let mut theta = p.to_vec();
    theta.extend(std::iter::repeat_n(-7.0, n_p));
    let g1 = numeric_gradient(f, &theta, 1e-5);
    let g2 = numeric_gradient(f, &theta, 1e-6);
    let scale = g1.norm();
    for (a, b) in g1.values.iter().zip(&g2.values) {
        assert!((a - b).abs() <= 1e-3 * scale, "{a} vs {b}");
    }
}

#[test]
fn numeric_gradient_falls_back_to_one_side_at_a_wall() {
    let f = |x: &[f64]| if x[0] > 1.0 { f64::INFINITY } else { x[0] * x[0] };
    let g = numeric_gradient(f, &[1.0], 1e-6);
    assert!(g.one_sided[0]);
    assert!(g.values[0].is_finite());
    assert!((g.values[0] - 2.0).abs() < 1e-4);
}

fn fitted(params: MixtureParams, data: &Dataset, mode: VariationMode) -> FitResult {
    let dm = best_delta_m(data, &params, mode, 1.0).unwrap();
    let q = q_total(data, &params, &dm, mode).unwrap();
    FitResult {
        params,
        delta_m: dm,
        q,
        mode,
        stage_history: Vec::<StageReport>::new(),
        pruned: Vec::new(),
        runaway_width: false,
    }
}

#[test]
fn pruning_a_light_component_keeps_q() {
    let data = normal_sample(200, 0.0, 1.0, 32);
    let p =
        MixtureParams::from_weights(Scheme::SquaredNorm, 1, &[1.0 - 1e-9, 1e-9], vec![0.0, 2.0], &[1.0, 0.5]).unwrap();
    let before = fitted(p, &data, VariationMode::Global);
    let after = prune(&before, &data, &FitConfig::default()).unwrap();
    assert_eq!(after.params.n_components(), 1);
    assert_eq!(after.pruned, vec![1]);
    assert!(!after.runaway_width);
    let rel = (after.q.q_total - before.q.q_total).abs() / before.q.q_total;
    assert!(rel < 1e-3, "relative change {rel}");
}

#[test]
fn pruning_without_light_components_is_identity() {
    let data = normal_sample(50, 0.0, 1.0, 33);
    let p = MixtureParams::from_weights(Scheme::Hyperspherical, 1, &[0.6, 0.4], vec![-1.0, 1.0], &[1.0, 1.0]).unwrap();
    let before = fitted(p, &data, VariationMode::Local);
    assert_eq!(prune(&before, &data, &FitConfig::default()).unwrap(), before);
}

#[test]
fn collapsed_heavy_component_is_flagged() {
    let data = normal_sample(100, 0.0, 1.0, 34);
    let range = data.ranges()[0];
    let p = MixtureParams::from_weights(
        Scheme::SquaredNorm,
        1,
        &[0.8, 0.2],
        vec![0.0, data.row(0)[0]],
        &[1.0, 1e-8 * range],
    )
    .unwrap();
    let before = fitted(p, &data, VariationMode::Global);
    let after = prune(&before, &data, &FitConfig::default()).unwrap();
    assert!(after.runaway_width);
    assert!(!after.is_valid());
}

#[test]
fn pruning_everything_is_an_error() {
    let data = normal_sample(20, 0.0, 1.0, 35);
    let p = MixtureParams::from_weights(Scheme::SquaredNorm, 1, &[1.0], vec![0.0], &[1e-9]).unwrap();
    let before = fitted(p, &data, VariationMode::Global);
    assert_eq!(prune(&before, &data, &FitConfig::default()), Err(Error::PruneAll));
}

#[test]
fn valid_ranges_are_returned_unchanged() {
    let data = normal_sample(50, 0.0, 1.0, 36);
    let p = MixtureParams::from_weights(Scheme::SquaredNorm, 1, &[1.0], vec![0.0], &[1.0]).unwrap();
    let dm = DeltaM::uniform(3, 1e-3).unwrap();
    let r = repair_delta_m(&data, &p, &dm, VariationMode::Global).unwrap();
    assert_eq!(r.scale, 1.0);
    assert_eq!(r.delta_m, dm);
}

#[test]
fn repair_restores_validity_on_a_new_2d_sample() {
    let mut r = rng(37);
    let p = random_params(&mut r, Scheme::SquaredNorm, 3, 2);
    let train = sample(&mut r, &p, 100);
    let mode = VariationMode::Local;
    let dm = best_delta_m(&train, &p, mode, 1.0).unwrap();
    assert!(q_total(&train, &p, &dm, mode).unwrap().valid);
    // a far outlier needs more room than the training points left
    let mut pts = train.as_slice().to_vec();
    pts.extend_from_slice(&[40.0, -45.0]);
    let test = Dataset::new(pts, 2).unwrap();
    assert!(!q_total(&test, &p, &dm, mode).unwrap().valid);
    let fixed = repair_delta_m(&test, &p, &dm, mode).unwrap();
    assert!(fixed.q.valid && fixed.q.q_total.is_finite());
    assert!(fixed.scale < 1.0);
    let beyond = dm.scaled(fixed.scale * 1.01);
    assert!(!q_total(&test, &p, &beyond, mode).unwrap().valid);
}

#[test]
fn validity_is_monotone_in_the_range_scale() {
    let mut r = rng(38);
    for trial in 0..20 {
        let d = 1 + trial % 2;
        let p = random_params(&mut r, schemes()[trial % 2], 2, d);
        let data = sample(&mut r, &p, 30);
        let dm = DeltaM::uniform(p.n_params(), r.random_range(0.05..1.0)).unwrap();
        for mode in [VariationMode::Local, VariationMode::Global] {
            let mut seen_invalid = false;
            for step in 0..60 {
                let s = 10f64.powf(-0.2 * step as f64);
                let valid = q_total(&data, &p, &dm.scaled(1.0 / s), mode).unwrap().valid;
                // walking towards larger ranges: once invalid, never valid again
                assert!(!(seen_invalid && valid));
                seen_invalid |= !valid;
            }
        }
    }
}

fn quick(seed: u64, k: usize) -> FitConfig {
    FitConfig {
        seed,
        max_components: k,
        ..FitConfig::default()
    }
    .with_total_budget(6000)
}

#[test]
fn single_gaussian_gives_one_significant_component() {
    let data = normal_sample(100, 1.0, 2.0, 39);
    let r = fit(&data, &quick(0, 3)).unwrap();
    assert!(r.is_valid());
    assert_eq!(r.significant_components(0.01), 1);
    let recomputed = q_total(&data, &r.params, &r.delta_m, r.mode).unwrap();
    assert!((recomputed.q_total - r.q.q_total).abs() <= 1e-10 * r.q.q_total.abs());
    for w in r.stage_history.windows(2) {
        assert!(w[1].best_q <= w[0].best_q);
    }
}

#[test]
fn fits_are_deterministic_per_seed() {
    let data = normal_sample(60, 0.0, 1.0, 40);
    let a = fit(&data, &quick(5, 2)).unwrap();
    let b = fit(&data, &quick(5, 2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn argmin_does_not_depend_on_the_precision_unit() {
    let data = normal_sample(80, 0.5, 1.5, 41);
    let a = fit(&data, &quick(3, 1)).unwrap();
    let b = fit(
        &data,
        &FitConfig {
            delta_x: 0.25,
            ..quick(3, 1)
        },
    )
    .unwrap();
    // the raw amplitude of a lone component is free, so compare the shape
    let shape = |f: &FitResult| [f.params.mean(0, 0), f.params.width(0, 0)];
    for (x, y) in shape(&a).iter().zip(shape(&b)) {
        assert!((x - y).abs() < 1e-4 * x.abs().max(1.0), "{x} vs {y}");
    }
    // mean and width ranges are interior, so their ratios to the precision match
    for k in 1..3 {
        let (x, y) = (a.delta_m.values()[k], b.delta_m.values()[k] / 0.25);
        assert!((x / y - 1.0).abs() < 1e-2, "{x} vs {y}");
    }
}

#[test]
fn likelihood_only_fit_reports_valid_ranges() {
    let data = normal_sample(60, 0.0, 1.0, 42);
    let r = fit(
        &data,
        &FitConfig {
            objective: bitfit_core::FitObjective::LikelihoodOnly,
            ..quick(1, 2)
        },
    )
    .unwrap();
    assert_eq!(r.delta_m.len(), r.params.n_params());
    assert!(r.q.q_l.is_finite());
}
