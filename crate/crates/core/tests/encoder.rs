mod common;

use bitfit_core::{encode, log_pdf, MixtureParams};
use common::*;
use nalgebra::DMatrix;
use rand::Rng;

fn jac_x_matrix(p: &MixtureParams, x: &[f64]) -> DMatrix<f64> {
    let e = encode(x, p).unwrap();
    DMatrix::from_row_slice(e.n_dim, e.n_dim, &e.jac_x)
}

#[test]
fn determinant_equals_density() {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for draw_i in 0..200 {
        let d = 1 + draw_i % 3;
        let k = r.random_range(1..=4);
        let p = random_params(&mut r, schemes()[draw_i % 2], k, d);
        let x = draw(&mut r, &p);
        let det = jac_x_matrix(&p, &x).determinant().abs();
        let lp = log_pdf(&x, &p).unwrap();
        let oracle = pdf_oracle(&x, &p);
        worst = worst.max((det - lp.exp()).abs() / lp.exp());
        assert!((det - oracle).abs() <= 1e-9 * oracle, "det {det} pdf {oracle}");
    }
    assert!(worst <= 1e-9, "worst relative gap {worst}");
}

#[test]
fn spatial_jacobian_is_lower_triangular() {
    let mut r = rng(12);
    for _ in 0..20 {
        let p = random_params(&mut r, schemes()[0], 3, 3);
        let x = draw(&mut r, &p);
        let e = encode(&x, &p).unwrap();
        for row in 0..3 {
            for col in row + 1..3 {
                assert_eq!(e.jac_x_at(row, col), 0.0);
            }
        }
    }
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(1e-6)
}

#[test]
fn analytic_jacobians_match_central_differences() {
    let mut r = rng(13);
    for scheme in schemes() {
        for draw_i in 0..100 {
            let d = 1 + draw_i % 3;
            let k = r.random_range(1..=3);
            let p = random_params(&mut r, scheme, k, d);
            let x = draw(&mut r, &p);
            let e = encode(&x, &p).unwrap();

            for mu in 0..d {
                let h = 1e-5 * x[mu].abs().max(1.0);
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[mu] += h;
                xm[mu] -= h;
                let (up, um) = (encode(&xp, &p).unwrap().u, encode(&xm, &p).unwrap().u);
                for nu in 0..d {
                    let fd = (up[nu] - um[nu]) / (2.0 * h);
                    assert!(
                        close(e.jac_x_at(nu, mu), fd),
                        "{scheme:?} dF{nu}/dx{mu}: {} vs {fd}",
                        e.jac_x_at(nu, mu)
                    );
                }
            }

            let theta = p.to_vec();
            for kk in 0..theta.len() {
                let h = 1e-5 * theta[kk].abs().max(1.0);
                let (mut tp, mut tm) = (theta.clone(), theta.clone());
                tp[kk] += h;
                tm[kk] -= h;
                let up = encode(&x, &p.with_values(&tp).unwrap()).unwrap().u;
                let um = encode(&x, &p.with_values(&tm).unwrap()).unwrap().u;
                for nu in 0..d {
                    let fd = (up[nu] - um[nu]) / (2.0 * h);
                    assert!(
                        close(e.jac_m_at(nu, kk), fd),
                        "{scheme:?} dF{nu}/dm{kk}: {} vs {fd}",
                        e.jac_m_at(nu, kk)
                    );
                }
            }
        }
    }
}

#[test]
fn encoded_coordinates_are_conditional_cdfs() {
    // marginal CDF of the first coordinate, by trapezoid quadrature of the oracle
    let mut r = rng(14);
    let p = random_params(&mut r, schemes()[0], 3, 1);
    let x = 0.7;
    let lo = -40.0;
    let steps = 200_000;
    let h = (x - lo) / steps as f64;
    let mut integral = 0.5 * (pdf_oracle(&[lo], &p) + pdf_oracle(&[x], &p));
    for s in 1..steps {
        integral += pdf_oracle(&[lo + s as f64 * h], &p);
    }
    integral *= h;
    let u = encode(&[x], &p).unwrap().u[0];
    assert!((u - integral).abs() < 1e-9, "{u} vs {integral}");
}

#[test]
fn encoded_coordinates_stay_in_unit_interval() {
    let mut r = rng(15);
    for _ in 0..50 {
        let p = random_params(&mut r, schemes()[1], 3, 2);
        let x: Vec<f64> = (0..2).map(|_| r.random_range(-30.0..30.0)).collect();
        for u in encode(&x, &p).unwrap().u {
            assert!((0.0..=1.0).contains(&u), "u = {u} at {x:?}");
        }
    }
}
