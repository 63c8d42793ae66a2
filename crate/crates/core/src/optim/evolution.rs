//! Separable CMA evolution strategy on the unit box, used as the global stage.
//!
//! Diagonal covariance, cumulative step-size adaptation, and restarts with a
//! doubled population when the step size collapses. Samples outside the box
//! are clamped and the clamped point is what the update sees.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{clamp_unit, StageOutcome};

pub(crate) struct EvolutionOptions {
    pub(crate) initial_sigma: f64,
    pub(crate) population_factor: usize,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self {
            initial_sigma: 0.1,
            population_factor: 2,
        }
    }
}

pub(crate) fn minimize<F: FnMut(&[f64]) -> f64, R: Rng>(
    f: &mut F,
    start: &[f64],
    start_value: f64,
    budget: usize,
    rng: &mut R,
    opts: &EvolutionOptions,
) -> StageOutcome {
    let n = start.len();
    let mut best_x = clamp_unit(start);
    let mut best_f = start_value;
    let mut evals = 0usize;
    if n == 0 {
        return StageOutcome {
            x: best_x,
            value: best_f,
            evaluations: 0,
        };
    }
    let nf = n as f64;
    let mut lambda = opts.population_factor.max(1) * (4 + (3.0 * nf.ln()).floor() as usize);

    while evals + lambda <= budget {
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let mu_eff = 1.0 / w.iter().map(|v| v * v).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let sep = (nf + 2.0) / 3.0;
        let c1 = (sep * 2.0 / ((nf + 1.3).powi(2) + mu_eff)).min(1.0);
        let c_mu = (sep * 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff)).min(1.0 - c1);
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        let mut mean = best_x.clone();
        let mut sigma = opts.initial_sigma;
        let mut diag = vec![1.0_f64; n];
        let mut p_sigma = vec![0.0; n];
        let mut p_c = vec![0.0; n];
        let mut generation = 0usize;
        let mut stall = 0usize;
        let mut run_best = f64::INFINITY;

        while evals + lambda <= budget {
            generation += 1;
            let mut pop: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(lambda);
            for _ in 0..lambda {
                let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let x: Vec<f64> = clamp_unit(
                    &(0..n)
                        .map(|i| mean[i] + sigma * diag[i].sqrt() * z[i])
                        .collect::<Vec<f64>>(),
                );
                let y: Vec<f64> = (0..n).map(|i| (x[i] - mean[i]) / sigma).collect();
                evals += 1;
                let fx = f(&x);
                pop.push((x, y, fx));
            }
            pop.sort_by(|a, b| a.2.total_cmp(&b.2));
            if pop[0].2 < best_f {
                best_f = pop[0].2;
                best_x = pop[0].0.clone();
            }
            if pop[0].2 < run_best - 1e-10 * (1.0 + run_best.abs()) {
                run_best = pop[0].2;
                stall = 0;
            } else {
                stall += 1;
            }
            if !pop[mu - 1].2.is_finite() {
                // too few feasible offspring to recombine: contract towards the best
                sigma *= 0.5;
                if pop[0].2.is_finite() {
                    mean = pop[0].0.clone();
                }
                if sigma < 1e-8 {
                    break;
                }
                continue;
            }

            let mut step = vec![0.0; n];
            for (wi, (_, y, _)) in w.iter().zip(&pop[..mu]) {
                for (s, v) in step.iter_mut().zip(y) {
                    *s += wi * v;
                }
            }
            for i in 0..n {
                mean[i] += sigma * step[i];
            }
            mean = clamp_unit(&mean);

            let cs_norm = (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
            for i in 0..n {
                p_sigma[i] = (1.0 - c_sigma) * p_sigma[i] + cs_norm * step[i] / diag[i].sqrt();
            }
            let ps_len = p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
            let h_sigma =
                ps_len / (1.0 - (1.0 - c_sigma).powi(2 * generation as i32)).sqrt() < (1.4 + 2.0 / (nf + 1.0)) * chi_n;
            let h = if h_sigma { 1.0 } else { 0.0 };
            let cc_norm = (c_c * (2.0 - c_c) * mu_eff).sqrt();
            for i in 0..n {
                p_c[i] = (1.0 - c_c) * p_c[i] + h * cc_norm * step[i];
            }
            for i in 0..n {
                let rank_mu: f64 = w.iter().zip(&pop[..mu]).map(|(wi, (_, y, _))| wi * y[i] * y[i]).sum();
                diag[i] = (1.0 - c1 - c_mu) * diag[i]
                    + c1 * (p_c[i] * p_c[i] + (1.0 - h) * c_c * (2.0 - c_c) * diag[i])
                    + c_mu * rank_mu;
                diag[i] = diag[i].clamp(1e-20, 1e6);
            }
            sigma *= ((c_sigma / d_sigma) * (ps_len / chi_n - 1.0)).exp();
            sigma = sigma.min(0.5);

            let spread = sigma * diag.iter().copied().fold(0.0, f64::max).sqrt();
            if spread < 1e-7 || stall > 20 + 10 * n / lambda {
                break;
            }
        }
        lambda *= 2;
    }
    StageOutcome {
        x: best_x,
        value: best_f,
        evaluations: evals,
    }
}
