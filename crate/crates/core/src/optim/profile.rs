//! Best truncation ranges for fixed model parameters.
//!
//! With the model fixed, `b_iμ = Σ_k A_iμk Δm_k` is linear in the ranges, so
//! `Q_delta + Q_r` as a function of `v = log Δm` has a cheap exact gradient once
//! the `|(∂F/∂x)⁻¹ ∂F/∂m|` table `A` is cached.

use alloc::vec;
use alloc::vec::Vec;

use super::polish::{self, PolishOptions, Smooth};
use crate::bitcost::{Workspace, B_FLOOR, DELTA_M_FLOOR};
use crate::linalg::forward_substitute;
use crate::mixture::PreparedMixture;
use crate::{Dataset, VariationMode};

pub(crate) struct ShiftTable {
    n_data: usize,
    n_dim: usize,
    n_params: usize,
    /// `n_data x n_dim x n_params`
    abs_shift: Vec<f64>,
}

impl ShiftTable {
    /// `None` when some point has a singular spatial Jacobian.
    pub(crate) fn new(prep: &PreparedMixture, data: &Dataset, delta_x: f64) -> Option<Self> {
        let (d, n_p) = (prep.n_dim(), prep.n_params());
        let mut ws = Workspace::new(prep);
        let mut abs_shift = Vec::with_capacity(data.len() * d * n_p);
        for x in data.rows() {
            prep.encode_into(x, &mut ws.scratch, &mut ws.eval);
            ws.y.copy_from_slice(&ws.eval.jac_m);
            if !forward_substitute(&ws.eval.jac_x, d, &mut ws.y, n_p) {
                return None;
            }
            abs_shift.extend(ws.y.iter().map(|v| v.abs() / delta_x));
        }
        Some(Self {
            n_data: data.len(),
            n_dim: d,
            n_params: n_p,
            abs_shift,
        })
    }

    fn perturbations(&self, dm: &[f64], b: &mut [f64]) {
        for (row, out) in self.abs_shift.chunks_exact(self.n_params).zip(b.iter_mut()) {
            *out = row.iter().zip(dm).map(|(a, d)| a * d).sum();
        }
    }

    /// `Q_delta + Q_r` at `log Δm = v`, with its gradient when requested.
    pub(crate) fn cost(&self, v: &[f64], mode: VariationMode, grad: Option<&mut [f64]>) -> f64 {
        let (n, d, n_p) = (self.n_data, self.n_dim, self.n_params);
        let dm: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let mut b = vec![0.0; n * d];
        self.perturbations(&dm, &mut b);
        let q_delta = -v.iter().sum::<f64>();
        // weight of each b_iμ in the regularizer gradient: ∂Q_r/∂b_iμ · b_iμ
        let mut wb = vec![0.0; n * d];
        let q_r = match mode {
            VariationMode::Global => {
                let mut s = 0.0;
                for &bv in &b {
                    s += bv.max(B_FLOOR).ln();
                }
                let g = (s / (n * d) as f64).exp();
                let corr = 1.0 - d as f64 * g;
                if corr <= 0.0 {
                    return f64::INFINITY;
                }
                let w = g / corr;
                for (o, &bv) in wb.iter_mut().zip(&b) {
                    *o = if bv >= B_FLOOR { w } else { 0.0 };
                }
                -(n as f64) * corr.ln()
            }
            VariationMode::Local => {
                let mut q = 0.0;
                for i in 0..n {
                    let row = &b[i * d..(i + 1) * d];
                    let g = (row.iter().map(|x| x.ln()).sum::<f64>() / d as f64).exp();
                    let corr = 1.0 - d as f64 * g;
                    if corr <= 0.0 {
                        return f64::INFINITY;
                    }
                    q -= corr.ln();
                    let w = g / corr;
                    for (o, &bv) in wb[i * d..(i + 1) * d].iter_mut().zip(row) {
                        *o = if bv > 0.0 { w } else { 0.0 };
                    }
                }
                q
            }
        };
        if let Some(grad) = grad {
            grad.iter_mut().for_each(|g| *g = -1.0);
            for (r, row) in self.abs_shift.chunks_exact(n_p).enumerate() {
                if wb[r] == 0.0 {
                    continue;
                }
                let scale = wb[r] / b[r];
                for k in 0..n_p {
                    grad[k] += scale * row[k] * dm[k];
                }
            }
        }
        q_delta + q_r
    }

    /// A uniform `log Δm` that is comfortably valid, if any is.
    fn feasible_start(&self, mode: VariationMode) -> Option<Vec<f64>> {
        let n_p = self.n_params;
        let mut v = vec![(0.5f64).ln(); n_p];
        for _ in 0..64 {
            if self.cost(&v, mode, None).is_finite() {
                return Some(v);
            }
            if v[0] <= DELTA_M_FLOOR.ln() {
                return None;
            }
            for x in v.iter_mut() {
                *x = (*x - 1.0).max(DELTA_M_FLOOR.ln());
            }
        }
        None
    }
}

struct ProfileObjective<'a> {
    table: &'a ShiftTable,
    mode: VariationMode,
}

impl Smooth for ProfileObjective<'_> {
    fn value(&mut self, x: &[f64]) -> Option<f64> {
        Some(self.table.cost(x, self.mode, None))
    }

    fn gradient(&mut self, x: &[f64], _fx: f64, out: &mut [f64]) -> Option<()> {
        self.table.cost(x, self.mode, Some(out));
        Some(())
    }
}

/// Minimizes `Q_delta + Q_r` over `log Δm ∈ [log DELTA_M_FLOOR, 0]`.
///
/// Starts from `start` if it is valid, else from a uniform feasible point.
/// Returns `None` when no valid ranges exist.
pub(crate) fn best_log_delta_m(
    table: &ShiftTable,
    mode: VariationMode,
    start: Option<&[f64]>,
) -> Option<(Vec<f64>, f64)> {
    let n_p = table.n_params;
    let lo = vec![DELTA_M_FLOOR.ln(); n_p];
    let hi = vec![0.0; n_p];
    let x0 = match start {
        Some(s) if table.cost(s, mode, None).is_finite() => s.to_vec(),
        _ => table.feasible_start(mode)?,
    };
    let mut obj = ProfileObjective { table, mode };
    let opts = PolishOptions {
        max_iterations: 300,
        ..PolishOptions::default()
    };
    let out = polish::minimize(&mut obj, &lo, &hi, &x0, &opts);
    out.value.is_finite().then_some((out.x, out.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcost::q_total;
    use crate::{DeltaM, MixtureParams, Scheme};

    fn setup() -> (Dataset, MixtureParams) {
        let data = Dataset::new(vec![-1.3, -0.4, 0.1, 0.2, 0.8, 1.1, 1.9, 2.4, 2.6, 3.3, -2.0, 0.5], 1).unwrap();
        let p = MixtureParams::new(Scheme::SquaredNorm, 1, vec![1.0, 0.6], vec![0.0, 2.5], vec![0.1, -0.3]).unwrap();
        (data, p)
    }

    #[test]
    fn cost_matches_full_objective_and_gradient_matches_differences() {
        let (data, p) = setup();
        let prep = PreparedMixture::new(&p).unwrap();
        let table = ShiftTable::new(&prep, &data, 1.0).unwrap();
        let v = [-3.0, -2.5, -4.0, -3.5, -2.0, -3.0];
        for mode in [VariationMode::Local, VariationMode::Global] {
            let q = q_total(&data, &p, &DeltaM::from_log(v.to_vec()).unwrap(), mode).unwrap();
            let c = table.cost(&v, mode, None);
            assert!((c - (q.q_delta + q.q_r)).abs() < 1e-10, "{c} {:?}", q);
            let mut g = vec![0.0; v.len()];
            table.cost(&v, mode, Some(&mut g));
            let fd = polish::numeric_gradient(|x: &[f64]| table.cost(x, mode, None), &v, 1e-6);
            for (a, b) in g.iter().zip(&fd.values) {
                assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} {b}");
            }
        }
    }

    #[test]
    fn profile_is_a_box_constrained_minimum() {
        let (data, p) = setup();
        let prep = PreparedMixture::new(&p).unwrap();
        let table = ShiftTable::new(&prep, &data, 1.0).unwrap();
        for mode in [VariationMode::Local, VariationMode::Global] {
            let (v, c) = best_log_delta_m(&table, mode, None).unwrap();
            for k in 0..v.len() {
                for step in [-1e-3, 1e-3] {
                    let mut w = v.clone();
                    w[k] = (w[k] + step).min(0.0);
                    assert!(table.cost(&w, mode, None) >= c - 1e-9);
                }
            }
        }
    }
}
