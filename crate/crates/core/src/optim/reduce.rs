//! Structural moves between refinement restarts: switch a component off or
//! merge two, let a few EM steps rebalance the rest, then re-solve the ranges.

use alloc::vec;
use alloc::vec::Vec;

use super::Problem;
use crate::math::{log_std_normal_pdf, log_sum_exp};
use crate::{Dataset, MixtureParams};

/// Weight given to a component that a move switches off.
const PARKED_WEIGHT: f64 = 1e-12;
const EM_STEPS: usize = 20;

/// Copies of `p` with one component switched off, or two merged into one by
/// matching their first two moments, plus `p` itself.
pub(super) fn variants(p: &MixtureParams) -> Vec<MixtureParams> {
    let Ok(w) = p.weights() else { return Vec::new() };
    let (k, d) = (p.n_components(), p.n_dim);
    let widths: Vec<f64> = p.log_widths.iter().map(|v| v.exp()).collect();
    let mut out = vec![p.clone()];
    let mut push = |weights: Vec<f64>, means: Vec<f64>, widths: &[f64]| {
        if let Ok(v) = MixtureParams::from_weights(p.scheme, d, &weights, means, widths) {
            out.push(v);
        }
    };
    for j in 0..k {
        if w[j] <= PARKED_WEIGHT {
            continue;
        }
        let mut wv = w.clone();
        wv[j] = PARKED_WEIGHT;
        push(wv, p.means.clone(), &widths);
    }
    for i in 0..k {
        for j in i + 1..k {
            if w[i] <= PARKED_WEIGHT || w[j] <= PARKED_WEIGHT {
                continue;
            }
            let total = w[i] + w[j];
            let mut wv = w.clone();
            wv[i] = total;
            wv[j] = PARKED_WEIGHT;
            let mut means = p.means.clone();
            let mut wd = widths.clone();
            for nu in 0..d {
                let (mi, mj) = (p.mean(i, nu), p.mean(j, nu));
                let (si, sj) = (widths[i * d + nu], widths[j * d + nu]);
                let m = (w[i] * mi + w[j] * mj) / total;
                let second = (w[i] * (si * si + mi * mi) + w[j] * (sj * sj + mj * mj)) / total;
                means[i * d + nu] = m;
                wd[i * d + nu] = (second - m * m).max(0.0).sqrt().max(si.min(sj));
            }
            push(wv, means, &wd);
        }
    }
    out
}

/// Maximum-likelihood EM steps. Components holding less than one point's
/// worth of responsibility are left as they are.
pub(super) fn em(p: &MixtureParams, data: &Dataset, steps: usize, min_width: &[f64]) -> Option<MixtureParams> {
    let (k, d) = (p.n_components(), p.n_dim);
    let mut w = p.weights().ok()?;
    let mut means = p.means.clone();
    let mut widths: Vec<f64> = p.log_widths.iter().map(|v| v.exp()).collect();
    let mut ell = vec![0.0; k];
    for _ in 0..steps {
        let mut nk = vec![0.0; k];
        let mut sx = vec![0.0; k * d];
        let mut sxx = vec![0.0; k * d];
        for x in data.rows() {
            for i in 0..k {
                let mut l = w[i].ln();
                for nu in 0..d {
                    let s = widths[i * d + nu];
                    l += log_std_normal_pdf((x[nu] - means[i * d + nu]) / s) - s.ln();
                }
                ell[i] = l;
            }
            let norm = log_sum_exp(&ell);
            if !norm.is_finite() {
                continue;
            }
            for i in 0..k {
                let r = (ell[i] - norm).exp();
                nk[i] += r;
                for nu in 0..d {
                    sx[i * d + nu] += r * x[nu];
                    sxx[i * d + nu] += r * x[nu] * x[nu];
                }
            }
        }
        for i in 0..k {
            if nk[i] < 1.0 {
                continue;
            }
            w[i] = nk[i] / data.len() as f64;
            for nu in 0..d {
                let m = sx[i * d + nu] / nk[i];
                let var = sxx[i * d + nu] / nk[i] - m * m;
                means[i * d + nu] = m;
                widths[i * d + nu] = var.max(0.0).sqrt().max(min_width[nu]);
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
    }
    MixtureParams::from_weights(p.scheme, d, &w, means, &widths).ok()
}

/// Applies the best move while it lowers `Q`, at most `rounds` times.
///
/// Returns the reduced point if any move was accepted.
pub(super) fn greedy(problem: &mut Problem, theta: &[f64], q: f64, rounds: usize) -> Option<(f64, Vec<f64>)> {
    let n_p = problem.n_p;
    let min_width: Vec<f64> = problem.data.ranges().iter().map(|r| 1e-3 * r).collect();
    let mut current = (q, theta.to_vec());
    let mut moved = false;
    for _ in 0..rounds {
        let p = problem.params(&current.1).ok()?;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for v in variants(&p) {
            let Some(v) = em(&v, problem.data, EM_STEPS, &min_width) else {
                continue;
            };
            let mut cand = v.to_vec();
            cand.extend_from_slice(&current.1[n_p..]);
            problem.clamp(&mut cand);
            let mut qc = problem.eval(&cand);
            problem.refit_ranges(&mut cand, &mut qc);
            if qc < best.as_ref().map_or(f64::INFINITY, |b| b.0) {
                best = Some((qc, cand));
            }
        }
        match best {
            Some(b) if b.0 < current.0 => {
                current = b;
                moved = true;
            }
            _ => break,
        }
    }
    moved.then_some(current)
}
