mod common;

use bitfit_core::{
    encode, perturbation_matrix, q_regularizer, q_total, q_total_with_precision, q_univariate, volume_first_order,
    volume_parallelotope, volume_per_parameter, Dataset, DeltaM, Scheme, VariationMode,
};
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_delta_m(r: &mut ChaCha8Rng, n: usize, lo_exp: f64, hi_exp: f64) -> DeltaM {
    let v: Vec<f64> = (0..n).map(|_| 10f64.powf(-r.random_range(lo_exp..hi_exp))).collect();
    DeltaM::new(&v).unwrap()
}

#[test]
fn perturbation_matrix_matches_dense_inverse() {
    let mut r = rng(21);
    for trial in 0..30 {
        let d = 1 + trial % 3;
        let p = random_params(&mut r, schemes()[trial % 2], 3, d);
        let data = sample(&mut r, &p, 15);
        let dm = random_delta_m(&mut r, p.n_params(), 2.0, 5.0);
        let b = perturbation_matrix(&data, &p, &dm).unwrap();
        let dmv = dm.values();
        for (i, x) in data.rows().enumerate() {
            let e = encode(x, &p).unwrap();
            let jx = DMatrix::from_row_slice(d, d, &e.jac_x);
            let jm = DMatrix::from_row_slice(d, e.n_params, &e.jac_m);
            let y = jx.try_inverse().unwrap() * jm;
            for mu in 0..d {
                let oracle: f64 = (0..e.n_params).map(|k| y[(mu, k)].abs() * dmv[k]).sum();
                let got = b.at(i, mu);
                assert!(
                    (got - oracle).abs() <= 1e-10 * oracle.abs().max(1e-300),
                    "{got} vs {oracle}"
                );
            }
        }
    }
}

#[test]
fn local_bit_count_equals_univariate_objective() {
    let mut r = rng(22);
    let mut checked = 0;
    while checked < 50 {
        let k = r.random_range(1..=3);
        let p = random_params(&mut r, schemes()[checked % 2], k, 1);
        let data = sample(&mut r, &p, 25);
        let dm = random_delta_m(&mut r, p.n_params(), 3.0, 6.0);
        let a = q_total(&data, &p, &dm, VariationMode::Local).unwrap();
        let b = q_univariate(&data, &p, &dm.values()).unwrap();
        if !a.valid {
            assert_eq!(b, f64::INFINITY);
            continue;
        }
        assert!((a.q_total - b).abs() <= 1e-10 * b.abs(), "{} vs {b}", a.q_total);
        checked += 1;
    }
}

#[test]
fn volume_approximations_agree_to_first_order() {
    let mut r = rng(23);
    for trial in 0..50 {
        let d = 2 + trial % 2;
        let k = r.random_range(1..=3);
        let p = random_params(&mut r, schemes()[trial % 2], k, d);
        let x = draw(&mut r, &p);
        let e = encode(&x, &p).unwrap();
        let dx = vec![1.0; d];
        let v0 = e.log_abs_det_jac_x().exp();
        let shape: Vec<f64> = (0..p.n_params()).map(|_| r.random_range(0.5..1.0)).collect();
        // pick the scale at which the first-order loss is 5%
        let probe = DeltaM::new(&shape).unwrap();
        let loss = 1.0 - volume_first_order(&e, &probe, &dx).unwrap() / v0;
        let mut s = 0.05 / loss;

        let mut prev: Option<[f64; 3]> = None;
        for _ in 0..6 {
            let dm = DeltaM::new(&shape.iter().map(|v| v * s).collect::<Vec<_>>()).unwrap();
            let v_par = volume_parallelotope(&e, &dm, &dx).unwrap() / v0;
            let v_first = volume_first_order(&e, &dm, &dx).unwrap() / v0;
            let v_each = volume_per_parameter(&e, &dm, &dx).unwrap() / v0;
            let gaps = [
                (v_par - v_first).abs() / s,
                (v_par - v_each).abs() / s,
                (v_first - v_each).abs() / s,
            ];
            if let Some(old) = prev {
                for (g_new, g_old) in gaps.iter().zip(old) {
                    // gaps at rounding level have converged already
                    if g_old > 1e-12 / s {
                        assert!(g_new / g_old < 0.75, "trial {trial}: gap ratio {}", g_new / g_old);
                    }
                }
            }
            prev = Some(gaps);
            s *= 0.5;
        }
    }
}

#[test]
fn unperturbed_volume_is_density_times_cell() {
    let mut r = rng(24);
    let p = random_params(&mut r, Scheme::SquaredNorm, 2, 2);
    let x = draw(&mut r, &p);
    let e = encode(&x, &p).unwrap();
    let tiny = DeltaM::uniform(p.n_params(), 1e-12).unwrap();
    let dx = [0.5, 2.0];
    let expect = pdf_oracle(&x, &p) * 1.0;
    for v in [
        volume_parallelotope(&e, &tiny, &dx).unwrap(),
        volume_first_order(&e, &tiny, &dx).unwrap(),
        volume_per_parameter(&e, &tiny, &dx).unwrap(),
    ] {
        assert!((v - expect).abs() < 1e-9 * expect);
    }
}

#[test]
fn precision_change_shifts_q_by_a_count_constant() {
    // Q(dx, dm) = Q(1, dm/dx) - (N·n_dim + N_p)·ln dx
    let mut r = rng(25);
    for trial in 0..10 {
        let d = 1 + trial % 2;
        let p = random_params(&mut r, schemes()[trial % 2], 2, d);
        let data = sample(&mut r, &p, 30);
        let dm = random_delta_m(&mut r, p.n_params(), 3.0, 5.0);
        for dx in [0.1, 0.5, 3.0] {
            for mode in [VariationMode::Local, VariationMode::Global] {
                let scaled = dm.scaled(dx);
                let a = q_total_with_precision(&data, &p, &scaled, mode, dx).unwrap();
                let b = q_total(&data, &p, &dm, mode).unwrap();
                let shift = ((data.len() * d + p.n_params()) as f64) * dx.ln();
                assert!((a.q_total - (b.q_total - shift)).abs() < 1e-9 * b.q_total.abs());
            }
        }
    }
}

fn instance() -> impl Strategy<Value = (u64, usize, usize, bool)> {
    (any::<u64>(), 1usize..4, 1usize..3, any::<bool>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn breakdown_terms_add_up((seed, k, d, hyper) in instance()) {
        let mut r = rng(seed);
        let scheme = if hyper { Scheme::Hyperspherical } else { Scheme::SquaredNorm };
        let p = random_params(&mut r, scheme, k, d);
        let data = sample(&mut r, &p, 20);
        let dm = random_delta_m(&mut r, p.n_params(), 2.0, 6.0);
        for mode in [VariationMode::Local, VariationMode::Global] {
            let q = q_total(&data, &p, &dm, mode).unwrap();
            if q.valid {
                prop_assert!((q.q_total - (q.q_l + q.q_delta + q.q_r)).abs() <= 1e-9 * q.q_total.abs().max(1.0));
                prop_assert!(q.q_r >= 0.0);
                prop_assert!((q.q_delta - dm.bit_length()).abs() < 1e-12 * q.q_delta.abs().max(1.0));
            }
        }
    }

    #[test]
    fn perturbation_is_linear_and_non_negative((seed, k, d, hyper) in instance(), c in 0.01f64..10.0) {
        let mut r = rng(seed);
        let scheme = if hyper { Scheme::Hyperspherical } else { Scheme::SquaredNorm };
        let p = random_params(&mut r, scheme, k, d);
        let data = sample(&mut r, &p, 10);
        let dm = random_delta_m(&mut r, p.n_params(), 3.0, 6.0);
        let b1 = perturbation_matrix(&data, &p, &dm).unwrap();
        let b2 = perturbation_matrix(&data, &p, &dm.scaled(c)).unwrap();
        for (a, b) in b1.b.iter().zip(&b2.b) {
            prop_assert!(*a >= 0.0);
            prop_assert!((b - c * a).abs() <= 1e-12 * (c * a).max(1e-300));
        }
    }

    #[test]
    fn pooled_precision_never_costs_more((seed, k, d, hyper) in instance()) {
        let mut r = rng(seed);
        let scheme = if hyper { Scheme::Hyperspherical } else { Scheme::SquaredNorm };
        let p = random_params(&mut r, scheme, k, d);
        let data = sample(&mut r, &p, 20);
        let dm = random_delta_m(&mut r, p.n_params(), 2.0, 5.0);
        let local = q_regularizer(&data, &p, &dm, VariationMode::Local).unwrap();
        let global = q_regularizer(&data, &p, &dm, VariationMode::Global).unwrap();
        if local.valid && global.valid && !global.floored {
            prop_assert!(global.q_r <= local.q_r + 1e-9 * local.q_r.abs().max(1e-12));
        }
    }

    #[test]
    fn translation_leaves_q_unchanged((seed, k, d, hyper) in instance(), shift in -50.0f64..50.0) {
        let mut r = rng(seed);
        let scheme = if hyper { Scheme::Hyperspherical } else { Scheme::SquaredNorm };
        let p = random_params(&mut r, scheme, k, d);
        let data = sample(&mut r, &p, 20);
        let dm = random_delta_m(&mut r, p.n_params(), 3.0, 6.0);
        let moved_data = Dataset::new(data.as_slice().iter().map(|v| v + shift).collect(), d).unwrap();
        let mut moved = p.clone();
        moved.means.iter_mut().for_each(|m| *m += shift);
        for mode in [VariationMode::Local, VariationMode::Global] {
            let a = q_total(&data, &p, &dm, mode).unwrap();
            let b = q_total(&moved_data, &moved, &dm, mode).unwrap();
            prop_assert_eq!(a.valid, b.valid);
            if a.valid {
                prop_assert!((a.q_total - b.q_total).abs() <= 1e-8 * a.q_total.abs().max(1.0));
            }
        }
    }

    #[test]
    fn weights_form_a_distribution((seed, k, d, hyper) in instance()) {
        let mut r = rng(seed);
        let scheme = if hyper { Scheme::Hyperspherical } else { Scheme::SquaredNorm };
        let p = random_params(&mut r, scheme, k, d);
        let w = p.weights().unwrap();
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
