//! The bit-count objective `Q = Q_l + Q_delta + Q_r`.
//!
//! Truncating parameter `m_k` to a range `Δm_k` moves every decoded point by up
//! to `(∂F/∂x)⁻¹ ∂F/∂m_k Δm_k`. Collecting those shifts per coordinate gives the
//! perturbation matrix
//!
//! ```text
//! b_iμ = Σ_k |((∂F/∂x)⁻¹ ∂F/∂m)_μk| Δm_k
//! ```
//!
//! which shrinks the volume available to the encoded point. With the data
//! precision normalized to one and its shape chosen optimally, the lost volume
//! becomes the regularizer:
//!
//! - local (per-point budget):  `Q_r = -Σ_i log(1 - n_dim (Π_μ b_iμ)^(1/n_dim))`
//! - global (total budget):     `Q_r = -n_data log(1 - n_dim G)`, with `G` the
//!   geometric mean of all `b_iμ`
//!
//! Both come from maximizing the first-order volume over the precision shape
//! (AM-GM within a point, then equalizing the per-point terms for the global
//! budget). An argument of the logarithm that is not strictly positive makes
//! `Q` invalid, reported as `+inf` rather than as an error.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{determinant, forward_substitute, orthogonalized_column};
use crate::mixture::{EncodeScratch, EncoderEval, PreparedMixture};
use crate::{Dataset, Error, MixtureParams, Result};

/// Smallest truncation range the optimizer may use.
pub const DELTA_M_FLOOR: f64 = 1e-12;

/// Floor applied to `b_iμ` before taking logs in global mode.
pub const B_FLOOR: f64 = 1e-300;

/// Whether the precision budget is fixed per point or only in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum VariationMode {
    Local,
    #[default]
    Global,
}

/// Truncation ranges `Δm_k ∈ (0, 1]`, one per flattened model parameter.
///
/// Stored as logs, which is also the scale the optimizer works on.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaM {
    log_values: Vec<f64>,
}

impl DeltaM {
    pub fn new(values: &[f64]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidParams(alloc::format!(
                "truncation range {v} outside (0, 1]"
            )));
        }
        Ok(Self {
            log_values: values.iter().map(|v| v.ln()).collect(),
        })
    }

    pub fn from_log(log_values: Vec<f64>) -> Result<Self> {
        if let Some(v) = log_values.iter().find(|v| !(**v <= 0.0 && v.exp() > 0.0)) {
            return Err(Error::InvalidParams(alloc::format!(
                "log truncation range {v} outside (-inf, 0]"
            )));
        }
        Ok(Self { log_values })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(&vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    /// Every range multiplied by `scale ∈ (0, 1]`.
    pub fn scaled(&self, scale: f64) -> Self {
        let ls = scale.ln();
        Self {
            log_values: self.log_values.iter().map(|v| v + ls).collect(),
        }
    }

    /// `-Σ_k log Δm_k`.
    pub fn bit_length(&self) -> f64 {
        -self.log_values.iter().sum::<f64>()
    }
}

/// Decomposed objective. All terms in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct QBreakdown {
    pub q_l: f64,
    pub q_delta: f64,
    pub q_r: f64,
    pub q_total: f64,
    pub valid: bool,
    /// The `(1 - ...)` argument of each point's regularizer logarithm. In global
    /// mode the optimal precision shape makes these all equal.
    pub per_point_corrections: Vec<f64>,
    /// Some `b_iμ` was zero and got floored (global mode only).
    pub floored: bool,
}

/// `b_iμ`, `n_data x n_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationMatrix {
    pub n_data: usize,
    pub n_dim: usize,
    pub b: Vec<f64>,
}

impl PerturbationMatrix {
    pub fn at(&self, point: usize, dim: usize) -> f64 {
        self.b[point * self.n_dim + dim]
    }
}

/// Regularizer value and the per-point logarithm arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub q_r: f64,
    pub per_point_corrections: Vec<f64>,
    pub valid: bool,
    pub floored: bool,
}

/// `(∂F/∂x)⁻¹ ∂F/∂m` by forward substitution, `n_dim x n_params`.
pub fn solve_parametric_shift(eval: &EncoderEval) -> Option<Vec<f64>> {
    let mut y = eval.jac_m.clone();
    forward_substitute(&eval.jac_x, eval.n_dim, &mut y, eval.n_params).then_some(y)
}

fn shift_magnitudes(y: &[f64], n_params: usize, dm: &[f64], out: &mut [f64]) {
    for (mu, o) in out.iter_mut().enumerate() {
        *o = y[mu * n_params..(mu + 1) * n_params]
            .iter()
            .zip(dm)
            .map(|(v, d)| v.abs() * d)
            .sum();
    }
}

fn check_shapes(dataset: &Dataset, params: &MixtureParams, delta_m: &DeltaM) -> Result<()> {
    if dataset.n_dim() != params.n_dim {
        return Err(Error::Dimension {
            what: "dataset dimension",
            expected: params.n_dim,
            got: dataset.n_dim(),
        });
    }
    if delta_m.len() != params.n_params() {
        return Err(Error::Dimension {
            what: "truncation ranges",
            expected: params.n_params(),
            got: delta_m.len(),
        });
    }
    Ok(())
}

pub fn perturbation_matrix(dataset: &Dataset, params: &MixtureParams, delta_m: &DeltaM) -> Result<PerturbationMatrix> {
    check_shapes(dataset, params, delta_m)?;
    let prep = PreparedMixture::new(params)?;
    let dm = delta_m.values();
    let (n, d, n_p) = (dataset.len(), params.n_dim, params.n_params());
    let mut b = vec![0.0; n * d];
    let mut ws = Workspace::new(&prep);
    for (i, x) in dataset.rows().enumerate() {
        prep.encode_into(x, &mut ws.scratch, &mut ws.eval);
        ws.y.copy_from_slice(&ws.eval.jac_m);
        if !forward_substitute(&ws.eval.jac_x, d, &mut ws.y, n_p) {
            return Err(Error::NonFiniteJacobian { index: i });
        }
        shift_magnitudes(&ws.y, n_p, &dm, &mut b[i * d..(i + 1) * d]);
    }
    Ok(PerturbationMatrix { n_data: n, n_dim: d, b })
}

fn check_volume_args(eval: &EncoderEval, delta_m: &DeltaM, delta_x: &[f64]) -> Result<()> {
    if delta_m.len() != eval.n_params {
        return Err(Error::Dimension {
            what: "truncation ranges",
            expected: eval.n_params,
            got: delta_m.len(),
        });
    }
    if delta_x.len() != eval.n_dim {
        return Err(Error::Dimension {
            what: "precision vector",
            expected: eval.n_dim,
            got: delta_x.len(),
        });
    }
    if !delta_x.iter().all(|v| *v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParams("precision must be positive".into()));
    }
    Ok(())
}

fn unperturbed_volume(eval: &EncoderEval, delta_x: &[f64]) -> f64 {
    let det: f64 = (0..eval.n_dim).map(|d| eval.jac_x_at(d, d)).product();
    det.abs() * delta_x.iter().product::<f64>()
}

/// First-order available volume with the determinant lemma:
/// `(1 - Σ_μ b_μ / Δx_μ) |det ∂F/∂x| Π Δx_μ`.
///
/// The result is signed; a non-positive value means no room is left.
pub fn volume_first_order(eval: &EncoderEval, delta_m: &DeltaM, delta_x: &[f64]) -> Result<f64> {
    check_volume_args(eval, delta_m, delta_x)?;
    let y = solve_parametric_shift(eval).ok_or(Error::NonFiniteJacobian { index: 0 })?;
    let mut b = vec![0.0; eval.n_dim];
    shift_magnitudes(&y, eval.n_params, &delta_m.values(), &mut b);
    let loss: f64 = b.iter().zip(delta_x).map(|(b, dx)| b / dx).sum();
    Ok((1.0 - loss) * unperturbed_volume(eval, delta_x))
}

/// Per-parameter decoupled product
/// `|det ∂F/∂x| Π_k (1 - Σ_μ |y_μk| Δm_k / Δx_μ) Π Δx_μ`.
///
/// When any factor is non-positive the return value is non-positive as well.
pub fn volume_per_parameter(eval: &EncoderEval, delta_m: &DeltaM, delta_x: &[f64]) -> Result<f64> {
    check_volume_args(eval, delta_m, delta_x)?;
    let y = solve_parametric_shift(eval).ok_or(Error::NonFiniteJacobian { index: 0 })?;
    let n_p = eval.n_params;
    let dm = delta_m.values();
    let mut product = 1.0;
    let mut any_invalid = false;
    for (k, dmk) in dm.iter().enumerate() {
        let loss: f64 = (0..eval.n_dim)
            .map(|mu| y[mu * n_p + k].abs() * dmk / delta_x[mu])
            .sum();
        let factor = 1.0 - loss;
        any_invalid |= factor <= 0.0;
        product *= factor;
    }
    let v = product.abs() * unperturbed_volume(eval, delta_x);
    Ok(if any_invalid { -v } else { v })
}

/// Volume of the parallelotope whose edges are the Jacobian columns, each
/// pushed inward by every parameter shift.
///
/// Column `μ` becomes `∂F/∂x_μ Δx_μ - Σ_k s(μ,k) ∂F/∂m_k Δm_k` with
/// `s(μ,k) = sign(⊥_μ · ∂F/∂m_k)`, where `⊥_μ` is column `μ` orthogonalized
/// against the other columns.
pub fn volume_parallelotope(eval: &EncoderEval, delta_m: &DeltaM, delta_x: &[f64]) -> Result<f64> {
    check_volume_args(eval, delta_m, delta_x)?;
    let (d, n_p) = (eval.n_dim, eval.n_params);
    let dm = delta_m.values();
    let mut m = vec![0.0; d * d];
    for mu in 0..d {
        let perp = orthogonalized_column(&eval.jac_x, d, mu).ok_or(Error::DegenerateJacobian { column: mu })?;
        for nu in 0..d {
            m[nu * d + mu] = eval.jac_x_at(nu, mu) * delta_x[mu];
        }
        for (k, dmk) in dm.iter().enumerate() {
            let proj: f64 = (0..d).map(|nu| perp[nu] * eval.jac_m[nu * n_p + k]).sum();
            let s = if proj >= 0.0 { 1.0 } else { -1.0 };
            for nu in 0..d {
                m[nu * d + mu] -= s * eval.jac_m[nu * n_p + k] * dmk;
            }
        }
    }
    Ok(determinant(&m, d).abs())
}

/// Buffers for evaluating one point at a time.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    pub(crate) scratch: EncodeScratch,
    pub(crate) eval: EncoderEval,
    pub(crate) y: Vec<f64>,
    b: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(prep: &PreparedMixture) -> Self {
        let eval = prep.new_eval();
        Self {
            y: vec![0.0; eval.jac_m.len()],
            b: vec![0.0; prep.n_dim()],
            scratch: EncodeScratch::default(),
            eval,
        }
    }
}

/// What one data point contributes to `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PointTerm {
    pub(crate) log_pdf: f64,
    /// `Σ_μ log(b_iμ / Δx)`, floored at [`B_FLOOR`].
    pub(crate) sum_log_b: f64,
    /// `1 - n_dim (Π_μ b_iμ / Δx)^(1/n_dim)`, unfloored.
    pub(crate) local_corr: f64,
    pub(crate) floored: bool,
    pub(crate) singular: bool,
}

pub(crate) fn point_term(prep: &PreparedMixture, x: &[f64], dm: &[f64], delta_x: f64, ws: &mut Workspace) -> PointTerm {
    let (d, n_p) = (prep.n_dim(), prep.n_params());
    prep.encode_into(x, &mut ws.scratch, &mut ws.eval);
    ws.y.copy_from_slice(&ws.eval.jac_m);
    if !forward_substitute(&ws.eval.jac_x, d, &mut ws.y, n_p) {
        return PointTerm {
            log_pdf: ws.eval.log_pdf,
            sum_log_b: f64::INFINITY,
            local_corr: f64::NEG_INFINITY,
            floored: false,
            singular: true,
        };
    }
    shift_magnitudes(&ws.y, n_p, dm, &mut ws.b);
    let mut sum_log_b = 0.0;
    let mut sum_log_raw = 0.0;
    let mut floored = false;
    for &b in &ws.b {
        let r = b / delta_x;
        sum_log_raw += r.ln();
        if r < B_FLOOR {
            floored = true;
            sum_log_b += B_FLOOR.ln();
        } else {
            sum_log_b += r.ln();
        }
    }
    let local_corr = 1.0 - d as f64 * (sum_log_raw / d as f64).exp();
    PointTerm {
        log_pdf: ws.eval.log_pdf,
        sum_log_b,
        local_corr,
        floored,
        singular: false,
    }
}

/// Regularizer from per-point terms; shared by every evaluation path.
pub(crate) fn regularizer_from_terms(terms: &[PointTerm], n_dim: usize, mode: VariationMode) -> Regularizer {
    let n = terms.len();
    let singular = terms.iter().any(|t| t.singular);
    match mode {
        VariationMode::Local => {
            let corrections: Vec<f64> = terms.iter().map(|t| t.local_corr).collect();
            let valid = !singular && corrections.iter().all(|c| *c > 0.0);
            let q_r = if valid {
                -corrections.iter().map(|c| c.ln()).sum::<f64>()
            } else {
                f64::INFINITY
            };
            Regularizer {
                q_r,
                per_point_corrections: corrections,
                valid,
                floored: false,
            }
        }
        VariationMode::Global => {
            let (q_r, corr, floored) = global_regularizer(
                terms.iter().map(|t| t.sum_log_b).sum(),
                terms.iter().any(|t| t.floored),
                n,
                n_dim,
            );
            let valid = !singular && corr > 0.0;
            Regularizer {
                q_r: if valid { q_r } else { f64::INFINITY },
                per_point_corrections: vec![if singular { f64::NEG_INFINITY } else { corr }; n],
                valid,
                floored,
            }
        }
    }
}

/// `(q_r, correction, floored)` from the summed log perturbations.
pub(crate) fn global_regularizer(sum_log_b: f64, floored: bool, n_data: usize, n_dim: usize) -> (f64, f64, bool) {
    let g = (sum_log_b / (n_data * n_dim) as f64).exp();
    let corr = 1.0 - n_dim as f64 * g;
    let q_r = if corr > 0.0 {
        -(n_data as f64) * corr.ln()
    } else {
        f64::INFINITY
    };
    (q_r, corr, floored)
}

pub(crate) fn breakdown_from_terms(
    terms: &[PointTerm],
    n_dim: usize,
    q_delta: f64,
    mode: VariationMode,
    delta_x: f64,
) -> QBreakdown {
    let n = terms.len();
    let q_l = -terms.iter().map(|t| t.log_pdf).sum::<f64>() - (n * n_dim) as f64 * delta_x.ln();
    let reg = regularizer_from_terms(terms, n_dim, mode);
    QBreakdown {
        q_l,
        q_delta,
        q_r: reg.q_r,
        q_total: if reg.valid {
            q_l + q_delta + reg.q_r
        } else {
            f64::INFINITY
        },
        valid: reg.valid,
        per_point_corrections: reg.per_point_corrections,
        floored: reg.floored,
    }
}

pub(crate) fn collect_terms(
    prep: &PreparedMixture,
    dataset: &Dataset,
    dm: &[f64],
    delta_x: f64,
    ws: &mut Workspace,
    out: &mut Vec<PointTerm>,
) {
    out.clear();
    out.extend(dataset.rows().map(|x| point_term(prep, x, dm, delta_x, ws)));
}

pub fn q_regularizer(
    dataset: &Dataset,
    params: &MixtureParams,
    delta_m: &DeltaM,
    mode: VariationMode,
) -> Result<Regularizer> {
    check_shapes(dataset, params, delta_m)?;
    let prep = PreparedMixture::new(params)?;
    let mut ws = Workspace::new(&prep);
    let mut terms = Vec::with_capacity(dataset.len());
    collect_terms(&prep, dataset, &delta_m.values(), 1.0, &mut ws, &mut terms);
    Ok(regularizer_from_terms(&terms, params.n_dim, mode))
}

/// `Q` with the data precision normalized to one.
pub fn q_total(dataset: &Dataset, params: &MixtureParams, delta_m: &DeltaM, mode: VariationMode) -> Result<QBreakdown> {
    q_total_with_precision(dataset, params, delta_m, mode, 1.0)
}

/// `Q` for a uniform data precision `delta_x`.
///
/// `q_l` then counts the bits of the `Δx` cells, `-Σ log(f_i Δx^n_dim)`, and the
/// truncation ranges act through the ratios `Δm / Δx`. Changing `delta_x`
/// shifts `Q` by a constant that depends only on the counts.
pub fn q_total_with_precision(
    dataset: &Dataset,
    params: &MixtureParams,
    delta_m: &DeltaM,
    mode: VariationMode,
    delta_x: f64,
) -> Result<QBreakdown> {
    check_shapes(dataset, params, delta_m)?;
    if !(delta_x > 0.0 && delta_x.is_finite()) {
        return Err(Error::InvalidParams("precision must be positive".into()));
    }
    let prep = PreparedMixture::new(params)?;
    let mut ws = Workspace::new(&prep);
    let mut terms = Vec::with_capacity(dataset.len());
    collect_terms(&prep, dataset, &delta_m.values(), delta_x, &mut ws, &mut terms);
    Ok(breakdown_from_terms(
        &terms,
        params.n_dim,
        delta_m.bit_length(),
        mode,
        delta_x,
    ))
}

/// Univariate objective
/// `Q(m, r) = -Σ_i log(f_i - Σ_k |∂F/∂m_k| r_k) - Σ_k log r_k`.
///
/// Evaluated straight from the encoder output, without the perturbation
/// matrix; a non-positive argument gives `+inf`.
pub fn q_univariate(dataset: &Dataset, params: &MixtureParams, r: &[f64]) -> Result<f64> {
    if dataset.n_dim() != 1 || params.n_dim != 1 {
        return Err(Error::Dimension {
            what: "univariate objective dimension",
            expected: 1,
            got: dataset.n_dim(),
        });
    }
    if r.len() != params.n_params() {
        return Err(Error::Dimension {
            what: "precision ratios",
            expected: params.n_params(),
            got: r.len(),
        });
    }
    if r.iter().any(|v| !(*v > 0.0)) {
        return Ok(f64::INFINITY);
    }
    let prep = PreparedMixture::new(params)?;
    let mut scratch = EncodeScratch::default();
    let mut eval = prep.new_eval();
    let mut q = -r.iter().map(|v| v.ln()).sum::<f64>();
    for x in dataset.rows() {
        prep.encode_into(x, &mut scratch, &mut eval);
        let f = eval.jac_x[0];
        let shift: f64 = eval.jac_m.iter().zip(r).map(|(g, rk)| g.abs() * rk).sum();
        let arg = f - shift;
        if !(arg > 0.0) {
            return Ok(f64::INFINITY);
        }
        q -= arg.ln();
    }
    Ok(q)
}
