//! Box-constrained L-BFGS with backtracking, plus the finite-difference gradient.

use alloc::vec;
use alloc::vec::Vec;

use super::StageOutcome;

/// Finite-difference gradient with per-coordinate diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    /// Coordinates that fell back to a one-sided difference.
    pub one_sided: Vec<bool>,
    /// Coordinates where both sides were invalid; their value is 0.
    pub undefined: Vec<bool>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn any_undefined(&self) -> bool {
        self.undefined.iter().any(|v| *v)
    }
}

/// Central differences with step `rel_step * max(|x_k|, 1)`.
///
/// A coordinate whose perturbed value is not finite on one side uses the
/// one-sided difference against `f(x)`; if both sides are invalid the entry is
/// 0 and flagged.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], rel_step: f64) -> Gradient {
    let f0 = f(x);
    gradient_at(&mut f, x, f0, rel_step)
}

pub(crate) fn gradient_at<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], f0: f64, rel_step: f64) -> Gradient {
    let n = x.len();
    let mut g = Gradient {
        values: vec![0.0; n],
        one_sided: vec![false; n],
        undefined: vec![false; n],
    };
    let mut probe = x.to_vec();
    for k in 0..n {
        let h = rel_step * x[k].abs().max(1.0);
        probe[k] = x[k] + h;
        let fp = f(&probe);
        probe[k] = x[k] - h;
        let fm = f(&probe);
        probe[k] = x[k];
        g.values[k] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) if f0.is_finite() => {
                g.one_sided[k] = true;
                (fp - f0) / h
            }
            (false, true) if f0.is_finite() => {
                g.one_sided[k] = true;
                (f0 - fm) / h
            }
            _ => {
                g.undefined[k] = true;
                0.0
            }
        };
    }
    g
}

/// A smooth objective that may run out of budget (`None`).
pub(crate) trait Smooth {
    fn value(&mut self, x: &[f64]) -> Option<f64>;
    fn gradient(&mut self, x: &[f64], fx: f64, out: &mut [f64]) -> Option<()>;
}

pub(crate) struct PolishOptions {
    pub(crate) memory: usize,
    pub(crate) max_iterations: usize,
    pub(crate) f_tol: f64,
    pub(crate) pg_tol: f64,
}

impl Default for PolishOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iterations: 500,
            f_tol: 1e-12,
            pg_tol: 1e-9,
        }
    }
}

fn clamp_box(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coordinates pinned at a bound by a gradient pushing outward.
fn pinned(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
        .collect()
}

pub(crate) fn minimize<S: Smooth>(
    obj: &mut S,
    lo: &[f64],
    hi: &[f64],
    start: &[f64],
    opts: &PolishOptions,
) -> StageOutcome {
    let n = start.len();
    let mut x = start.to_vec();
    clamp_box(&mut x, lo, hi);
    let mut evals = 0usize;
    let Some(mut fx) = obj.value(&x) else {
        return StageOutcome {
            x,
            value: f64::INFINITY,
            evaluations: 0,
        };
    };
    evals += 1;
    let mut g = vec![0.0; n];
    if !fx.is_finite() || obj.gradient(&x, fx, &mut g).is_none() {
        return StageOutcome {
            x,
            value: fx,
            evaluations: evals,
        };
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut quiet = 0usize;

    for _ in 0..opts.max_iterations {
        let pin = pinned(&x, &g, lo, hi);
        let pg = (0..n).filter(|i| !pin[*i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg < opts.pg_tol {
            break;
        }

        let mut d: Vec<f64> = (0..n).map(|i| if pin[i] { 0.0 } else { -g[i] }).collect();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for j in (0..m).rev() {
            let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
            alphas[j] = rho * dot(&s_hist[j], &d);
            for (di, yi) in d.iter_mut().zip(&y_hist[j]) {
                *di -= alphas[j] * yi;
            }
        }
        let gamma = if m > 0 {
            dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1])
        } else {
            let scale = (0..n).map(|i| hi[i] - lo[i]).fold(f64::INFINITY, f64::min);
            (0.1 * scale / pg).min(1.0)
        };
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for j in 0..m {
            let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
            let beta = rho * dot(&y_hist[j], &d);
            for (di, si) in d.iter_mut().zip(&s_hist[j]) {
                *di += (alphas[j] - beta) * si;
            }
        }
        for i in 0..n {
            if pin[i] {
                d[i] = 0.0;
            }
        }
        if dot(&d, &g) >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            d = (0..n)
                .map(|i| if pin[i] { 0.0 } else { -g[i] * gamma.min(1.0) })
                .collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        let mut out_of_budget = false;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            clamp_box(&mut xn, lo, hi);
            let Some(fnew) = obj.value(&xn) else {
                out_of_budget = true;
                break;
            };
            evals += 1;
            let decrease: f64 = x.iter().zip(&xn).zip(&g).map(|((a, b), gi)| gi * (b - a)).sum();
            if fnew.is_finite() && fnew <= fx + 1e-4 * decrease {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        if out_of_budget {
            break;
        }
        let Some((xn, fnew)) = accepted else {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        let mut gn = vec![0.0; n];
        if obj.gradient(&xn, fnew, &mut gn).is_none() {
            x = xn;
            fx = fnew;
            break;
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        let gain = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        if gain <= opts.f_tol * (1.0 + fx.abs()) {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    StageOutcome {
        x,
        value: fx,
        evaluations: evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl_gradient() {
        let g = numeric_gradient(|x: &[f64]| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-6);
        assert!((g.values[0] - 2.0).abs() < 1e-6);
        assert!((g.values[1] - 4.0).abs() < 1e-6);
        assert!(!g.one_sided.iter().any(|v| *v));
    }

    #[test]
    fn one_sided_near_an_invalid_boundary() {
        let f = |x: &[f64]| {
            if x[0] > 1.0 {
                f64::INFINITY
            } else {
                -(1.0 - x[0] + 1e-3).ln()
            }
        };
        let g = numeric_gradient(f, &[1.0], 1e-6);
        assert!(g.one_sided[0] && g.values[0].is_finite());
        assert!((g.values[0] - 1.0 / 1e-3).abs() < 2.0);
        let dead = numeric_gradient(|_: &[f64]| f64::INFINITY, &[0.0], 1e-6);
        assert!(dead.undefined[0] && dead.values[0] == 0.0);
    }

    struct Rosenbrock;
    impl Smooth for Rosenbrock {
        fn value(&mut self, x: &[f64]) -> Option<f64> {
            Some((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        }
        fn gradient(&mut self, x: &[f64], _fx: f64, out: &mut [f64]) -> Option<()> {
            out[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            out[1] = 200.0 * (x[1] - x[0] * x[0]);
            Some(())
        }
    }

    #[test]
    fn minimizes_rosenbrock_and_respects_bounds() {
        let opts = PolishOptions::default();
        let free = minimize(&mut Rosenbrock, &[-5.0, -5.0], &[5.0, 5.0], &[-1.2, 1.0], &opts);
        assert!(
            (free.x[0] - 1.0).abs() < 1e-5 && (free.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            free.x
        );
        let boxed = minimize(&mut Rosenbrock, &[-5.0, -5.0], &[0.5, 5.0], &[-1.2, 1.0], &opts);
        assert!((boxed.x[0] - 0.5).abs() < 1e-12);
        assert!((boxed.x[1] - 0.25).abs() < 1e-5);
    }
}
