//! Parameter uncertainties by propagating encoded-data noise through the
//! stationarity condition of `Q`.
//!
//! At an optimum `∂Q/∂p = 0`. Moving the data by `Δx` moves the optimum by
//!
//! ```text
//! Δp = -A⁻¹ Σ_i H_px,i (∂F/∂x)_i⁻¹ Δu_i
//! ```
//!
//! where `H_px,i = ∂²Q/∂p∂x_i`, `Δu_i` is the noise of the encoded point with
//! standard deviation `(12 n_data)^(-1/2)` per coordinate, and `A` is either the
//! Hessian `H_pp` ([`ErrorMethod::Simple`]) or `H_pp - Σ_j H_px,j (∂F/∂x)_j⁻¹ ∂F/∂p_j`
//! ([`ErrorMethod::Full`]), which also accounts for the data being decoded
//! through the perturbed model.
//!
//! The parameter vector is the flattened model followed by `log Δm`. All
//! second derivatives are central finite differences.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::bitcost::{global_regularizer, point_term, PointTerm, Workspace};
use crate::mixture::PreparedMixture;
use crate::optim::FitResult;
use crate::{Dataset, Error, MixtureParams, Result, VariationMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ErrorMethod {
    /// `A = H_pp`.
    #[default]
    Simple,
    /// `A = H_pp - Σ_j H_px,j (∂F/∂x)_j⁻¹ ∂F/∂p_j`.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorOptions {
    pub method: ErrorMethod,
    /// Overrides `(12 n_data)^(-1/2)`.
    pub sigma_du: Option<f64>,
    /// Relative step for parameter differences.
    pub param_step: f64,
    /// Step for data differences, as a fraction of each dimension's std dev.
    pub data_step: f64,
    /// Largest projected gradient component still considered stationary.
    pub stationarity_tol: f64,
    /// Relative singular-value cutoff of the pseudo-inverse.
    pub rank_tol: f64,
}

impl Default for ErrorOptions {
    fn default() -> Self {
        Self {
            method: ErrorMethod::Simple,
            sigma_du: None,
            param_step: 1e-4,
            data_step: 1e-4,
            stationarity_tol: 1e-2,
            rank_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    /// One entry per parameter: the flattened model, then `log Δm`.
    pub std: Vec<f64>,
    /// Row-major, `n x n`.
    pub covariance: Vec<f64>,
    pub n: usize,
    pub method: ErrorMethod,
    /// Ratio of extreme singular values of `A`.
    pub condition: f64,
    /// `A` was singular to `rank_tol`; the pseudo-inverse was used.
    pub rank_deficient: bool,
    /// Largest projected gradient component of `Q` at the fit.
    pub gradient_norm: f64,
    pub stationary: bool,
}

impl ErrorEstimate {
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.n + j]
    }
}

/// Sums that determine `Q` once the per-point terms are known.
#[derive(Debug, Clone, Copy)]
struct Sums {
    log_pdf: f64,
    sum_log_b: f64,
    log_corr: f64,
    singular: bool,
}

struct Evaluator<'a> {
    data: &'a Dataset,
    scheme: crate::Scheme,
    n_a: usize,
    n_p: usize,
    mode: VariationMode,
}

impl Evaluator<'_> {
    fn prepare(&self, theta: &[f64]) -> Result<(PreparedMixture, Vec<f64>)> {
        let p = MixtureParams::from_slice(self.scheme, self.n_a, self.data.n_dim(), &theta[..self.n_p])?;
        let dm = theta[self.n_p..].iter().map(|v| v.exp()).collect();
        Ok((PreparedMixture::new(&p)?, dm))
    }

    fn terms(&self, theta: &[f64]) -> Result<(PreparedMixture, Vec<f64>, Vec<PointTerm>)> {
        let (prep, dm) = self.prepare(theta)?;
        let mut ws = Workspace::new(&prep);
        let terms = self
            .data
            .rows()
            .map(|x| point_term(&prep, x, &dm, 1.0, &mut ws))
            .collect();
        Ok((prep, dm, terms))
    }

    fn sums(terms: &[PointTerm]) -> Sums {
        Sums {
            log_pdf: terms.iter().map(|t| t.log_pdf).sum(),
            sum_log_b: terms.iter().map(|t| t.sum_log_b).sum(),
            log_corr: terms.iter().map(|t| t.local_corr.ln()).sum(),
            singular: terms.iter().any(|t| t.singular),
        }
    }

    /// `Q_r` (and the part of `Q` that is not a plain per-point sum).
    fn regularizer(&self, s: &Sums) -> f64 {
        if s.singular {
            return f64::INFINITY;
        }
        match self.mode {
            VariationMode::Local => {
                if s.log_corr.is_nan() {
                    f64::INFINITY
                } else {
                    -s.log_corr
                }
            }
            VariationMode::Global => global_regularizer(s.sum_log_b, false, self.data.len(), self.data.n_dim()).0,
        }
    }

    fn q(&self, theta: &[f64]) -> f64 {
        match self.terms(theta) {
            Ok((_, _, terms)) => {
                let s = Self::sums(&terms);
                let q_delta = -theta[self.n_p..].iter().sum::<f64>();
                -s.log_pdf + q_delta + self.regularizer(&s)
            }
            Err(_) => f64::INFINITY,
        }
    }
}

fn replace(base: &Sums, old: &PointTerm, new: &PointTerm) -> Sums {
    Sums {
        log_pdf: base.log_pdf - old.log_pdf + new.log_pdf,
        sum_log_b: base.sum_log_b - old.sum_log_b + new.sum_log_b,
        log_corr: base.log_corr - old.local_corr.ln() + new.local_corr.ln(),
        singular: base.singular || new.singular,
    }
}

/// Standard deviations of the fitted parameters with default options.
pub fn estimate_errors(dataset: &Dataset, fit: &FitResult, method: ErrorMethod) -> Result<ErrorEstimate> {
    estimate_errors_with(
        dataset,
        fit,
        &ErrorOptions {
            method,
            ..ErrorOptions::default()
        },
    )
}

pub fn estimate_errors_with(dataset: &Dataset, fit: &FitResult, opts: &ErrorOptions) -> Result<ErrorEstimate> {
    let params = &fit.params;
    if dataset.n_dim() != params.n_dim {
        return Err(Error::Dimension {
            what: "dataset dimension",
            expected: params.n_dim,
            got: dataset.n_dim(),
        });
    }
    let (n_data, d) = (dataset.len(), params.n_dim);
    let n_p = params.n_params();
    let nq = 2 * n_p;
    let ev = Evaluator {
        data: dataset,
        scheme: params.scheme,
        n_a: params.n_components(),
        n_p,
        mode: fit.mode,
    };
    let mut theta = params.to_vec();
    theta.extend_from_slice(fit.delta_m.log_values());
    let q0 = ev.q(&theta);
    if !q0.is_finite() {
        return Err(Error::InvalidParams("Q is invalid at the fitted point".into()));
    }

    let grad = crate::optim::numeric_gradient(|t: &[f64]| ev.q(t), &theta, 1e-6);
    let gradient_norm = (0..nq)
        .filter(|&k| !(k >= n_p && theta[k] >= 0.0 && grad.values[k] < 0.0))
        .map(|k| grad.values[k].abs())
        .fold(0.0, f64::max);

    let h: Vec<f64> = theta.iter().map(|t| opts.param_step * t.abs().max(1.0)).collect();
    let shifted = |k: usize, s: f64| {
        let mut t = theta.clone();
        t[k] += s * h[k];
        t
    };

    // H_pp
    let mut hpp = DMatrix::<f64>::zeros(nq, nq);
    let q_plus: Vec<f64> = (0..nq).map(|k| ev.q(&shifted(k, 1.0))).collect();
    let q_minus: Vec<f64> = (0..nq).map(|k| ev.q(&shifted(k, -1.0))).collect();
    for k in 0..nq {
        hpp[(k, k)] = (q_plus[k] - 2.0 * q0 + q_minus[k]) / (h[k] * h[k]);
        for l in 0..k {
            let corner = |sk: f64, sl: f64| {
                let mut t = theta.clone();
                t[k] += sk * h[k];
                t[l] += sl * h[l];
                ev.q(&t)
            };
            let v =
                (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h[k] * h[l]);
            hpp[(k, l)] = v;
            hpp[(l, k)] = v;
        }
    }
    if hpp.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("Q is not finite around the fitted point".into()));
    }

    // H_px, one n_q x n_dim block per point
    let hx: Vec<f64> = dataset
        .std_devs()
        .iter()
        .zip(dataset.ranges())
        .map(|(s, r)| opts.data_step * if *s > 0.0 { *s } else { r })
        .collect();
    let mut hpx = vec![0.0; n_data * nq * d];
    for k in 0..nq {
        for sign in [1.0, -1.0] {
            let t = shifted(k, sign);
            let (prep, dm, terms) = ev.terms(&t)?;
            let base = Evaluator::sums(&terms);
            let mut ws = Workspace::new(&prep);
            let mut x = vec![0.0; d];
            for (i, row) in dataset.rows().enumerate() {
                for mu in 0..d {
                    x.copy_from_slice(row);
                    x[mu] = row[mu] + hx[mu];
                    let up = point_term(&prep, &x, &dm, 1.0, &mut ws);
                    x[mu] = row[mu] - hx[mu];
                    let down = point_term(&prep, &x, &dm, 1.0, &mut ws);
                    let r_up = ev.regularizer(&replace(&base, &terms[i], &up));
                    let r_down = ev.regularizer(&replace(&base, &terms[i], &down));
                    let diff = -(up.log_pdf - down.log_pdf) + (r_up - r_down);
                    hpx[(i * nq + k) * d + mu] += sign * diff / (4.0 * h[k] * hx[mu]);
                }
            }
        }
    }

    // B_i = H_px,i (∂F/∂x)_i⁻¹ and the Full-method correction
    let sigma = opts.sigma_du.unwrap_or_else(|| (12.0 * n_data as f64).powf(-0.5));
    let p0 = MixtureParams::from_slice(params.scheme, params.n_components(), d, &theta[..n_p])?;
    let prep0 = PreparedMixture::new(&p0)?;
    let mut ws = Workspace::new(&prep0);
    let mut noise = DMatrix::<f64>::zeros(nq, nq);
    let mut correction = DMatrix::<f64>::zeros(nq, nq);
    for (i, row) in dataset.rows().enumerate() {
        prep0.encode_into(row, &mut ws.scratch, &mut ws.eval);
        let jx = DMatrix::from_row_slice(d, d, &ws.eval.jac_x);
        let h_i = DMatrix::from_row_slice(nq, d, &hpx[i * nq * d..(i + 1) * nq * d]);
        // B Jx = H  <=>  Jxᵀ Bᵀ = Hᵀ, Jxᵀ upper triangular
        let bt = jx
            .transpose()
            .solve_upper_triangular(&h_i.transpose())
            .ok_or(Error::NonFiniteJacobian { index: i })?;
        let b = bt.transpose();
        noise += &b * &bt;
        if opts.method == ErrorMethod::Full {
            let mut jp = DMatrix::<f64>::zeros(d, nq);
            for nu in 0..d {
                for k in 0..n_p {
                    jp[(nu, k)] = ws.eval.jac_m_at(nu, k);
                }
            }
            correction += &b * jp;
        }
    }
    noise *= sigma * sigma;
    let a = match opts.method {
        ErrorMethod::Simple => hpp,
        ErrorMethod::Full => hpp - correction,
    };

    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let s_min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let rank_deficient = !(s_min > opts.rank_tol * s_max);
    let a_inv = svd
        .pseudo_inverse(opts.rank_tol * s_max)
        .map_err(|e| Error::InvalidParams(alloc::string::String::from(e)))?;
    let cov = &a_inv * noise * a_inv.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let std = (0..nq).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    let mut covariance = Vec::with_capacity(nq * nq);
    for r in 0..nq {
        for c in 0..nq {
            covariance.push(cov[(r, c)]);
        }
    }
    Ok(ErrorEstimate {
        std,
        covariance,
        n: nq,
        method: opts.method,
        condition: if s_min > 0.0 { s_max / s_min } else { f64::INFINITY },
        rank_deficient,
        gradient_norm,
        stationary: gradient_norm <= opts.stationarity_tol,
    })
}
