//! Bounded Nelder-Mead with dimension-adaptive coefficients and restarts.
//!
//! Works on the unit box; callers map their bounds onto it. Vertices are
//! clamped into the box, so every evaluated point is feasible.

use alloc::vec;
use alloc::vec::Vec;

use super::{clamp_unit, StageOutcome};

pub(crate) struct SimplexOptions {
    pub(crate) initial_step: f64,
    pub(crate) min_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            min_step: 1e-5,
        }
    }
}

pub(crate) fn minimize<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    start: &[f64],
    start_value: Option<f64>,
    budget: usize,
    opts: &SimplexOptions,
) -> StageOutcome {
    let n = start.len();
    let mut evals = 0usize;
    let mut best_x = clamp_unit(start);
    let mut best_f = match start_value {
        Some(v) => v,
        None => {
            evals += 1;
            f(&best_x)
        }
    };
    if n == 0 {
        return StageOutcome {
            x: best_x,
            value: best_f,
            evaluations: evals,
        };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut step = opts.initial_step;

    while evals < budget && step >= opts.min_step {
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut fs: Vec<f64> = Vec::with_capacity(n + 1);
        xs.push(best_x.clone());
        fs.push(best_f);
        for i in 0..n {
            if evals >= budget {
                break;
            }
            let mut v = best_x.clone();
            v[i] = if v[i] + step <= 1.0 { v[i] + step } else { v[i] - step };
            evals += 1;
            fs.push(f(&v));
            xs.push(v);
        }
        if xs.len() < n + 1 {
            break;
        }
        let restart_best = best_f;

        loop {
            if evals >= budget {
                break;
            }
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
            let xs_sorted: Vec<Vec<f64>> = order.iter().map(|&i| xs[i].clone()).collect();
            let fs_sorted: Vec<f64> = order.iter().map(|&i| fs[i]).collect();
            xs = xs_sorted;
            fs = fs_sorted;

            let spread = xs[1..]
                .iter()
                .map(|v| v.iter().zip(&xs[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            let f_spread = fs[n] - fs[0];
            if spread < 1e-9 || (f_spread.is_finite() && f_spread <= 1e-12 * (1.0 + fs[0].abs())) {
                break;
            }

            let mut centroid = vec![0.0; n];
            for v in &xs[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                clamp_unit(
                    &centroid
                        .iter()
                        .zip(&xs[n])
                        .map(|(c, w)| c + t * (c - w))
                        .collect::<Vec<f64>>(),
                )
            };

            let xr = along(alpha);
            evals += 1;
            let fr = f(&xr);
            if fr < fs[0] {
                let xe = along(alpha * beta);
                evals += 1;
                let fe = f(&xe);
                if fe < fr {
                    xs[n] = xe;
                    fs[n] = fe;
                } else {
                    xs[n] = xr;
                    fs[n] = fr;
                }
            } else if fr < fs[n - 1] {
                xs[n] = xr;
                fs[n] = fr;
            } else {
                let (xc, fc) = if fr < fs[n] {
                    let xc = along(alpha * gamma);
                    evals += 1;
                    let fc = f(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-gamma);
                    evals += 1;
                    let fc = f(&xc);
                    (xc, fc)
                };
                if fc < fs[n].min(fr) {
                    xs[n] = xc;
                    fs[n] = fc;
                } else {
                    for i in 1..=n {
                        if evals >= budget {
                            break;
                        }
                        let shrunk: Vec<f64> = xs[0].iter().zip(&xs[i]).map(|(b, x)| b + delta * (x - b)).collect();
                        evals += 1;
                        fs[i] = f(&shrunk);
                        xs[i] = shrunk;
                    }
                }
            }
        }

        let (i_best, f_min) = fs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        if f_min < best_f {
            best_f = f_min;
            best_x = xs[i_best].clone();
        }
        if !(best_f < restart_best) {
            step *= 0.5;
        }
    }
    StageOutcome {
        x: best_x,
        value: best_f,
        evaluations: evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum_of_shifted_bowl() {
        let target = [0.3, 0.7, 0.55, 0.1];
        let mut f = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b) * 10.0)
                .sum::<f64>()
        };
        let out = minimize(&mut f, &[0.5; 4], None, 5000, &SimplexOptions::default());
        for (a, b) in out.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-4, "{:?}", out.x);
        }
        assert!(out.evaluations <= 5000);
    }

    #[test]
    fn respects_box_and_infinite_regions() {
        // minimum outside the box along x0; infinite where x1 > 0.8
        let mut f = |x: &[f64]| {
            if x[1] > 0.8 {
                f64::INFINITY
            } else {
                (x[0] + 1.0).powi(2) + (x[1] - 0.5).powi(2)
            }
        };
        let out = minimize(&mut f, &[0.5, 0.5], None, 2000, &SimplexOptions::default());
        assert!(out.x[0] >= 0.0 && out.x[0] < 1e-4);
        assert!((out.x[1] - 0.5).abs() < 1e-3);
    }
}
