//! Diagonal Gaussian mixtures as conditional-CDF coordinate transforms.
//!
//! Coordinate `λ` of the encoding is the CDF of `x_λ` conditioned on the
//! earlier coordinates:
//!
//! ```text
//! F_λ(x) = Σ_i π_iλ(x) Φ((x_λ - m_iλ) / σ_iλ),
//! π_iλ(x) ∝ a_i Π_{ν<λ} N(x_ν; m_iν, σ_iν²)
//! ```
//!
//! so `∂F_λ/∂x_λ` is the conditional density and the triangular spatial
//! Jacobian has the mixture density as its determinant. The responsibilities
//! `π_iλ` are evaluated in log space around the largest term, which keeps far
//! tail points finite.
//!
//! Parameters are flattened as `[amplitudes | means | log-widths]`, with means
//! and log-widths stored component-major (`i * n_dim + ν`).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{log_std_normal_pdf, log_sum_exp, std_normal_pdf, std_normal_tails};
use crate::{Error, Result};

/// How raw amplitude parameters map onto normalized mixture weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// `a_j = r_j² / Σ r_l²` over `n_a` free raw values.
    SquaredNorm,
    /// Squared components of a unit vector rotated by `n_a - 1` angles.
    Hyperspherical,
}

impl Scheme {
    pub fn n_amplitude_params(self, n_components: usize) -> usize {
        match self {
            Scheme::SquaredNorm => n_components,
            Scheme::Hyperspherical => n_components.saturating_sub(1),
        }
    }
}

/// Normalized weights together with `∂a_i/∂raw_j` (row-major, `n_a x n_raw`).
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub values: Vec<f64>,
    pub jacobian: Vec<f64>,
}

/// Derives mixture weights from raw amplitude parameters.
///
/// `n_components` is only consulted by the hyperspherical scheme, where the
/// raw vector is one shorter than the weight vector.
pub fn weights(amp_raw: &[f64], scheme: Scheme) -> Result<Weights> {
    match scheme {
        Scheme::SquaredNorm => squared_norm_weights(amp_raw),
        Scheme::Hyperspherical => Ok(hyperspherical_weights(amp_raw)),
    }
}

fn squared_norm_weights(raw: &[f64]) -> Result<Weights> {
    let n = raw.len();
    let s: f64 = raw.iter().map(|r| r * r).sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::DegenerateAmplitudes);
    }
    let values: Vec<f64> = raw.iter().map(|r| r * r / s).collect();
    let mut jacobian = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let delta = if i == k { raw[i] } else { 0.0 };
            jacobian[i * n + k] = 2.0 / s * (delta - values[i] * raw[k]);
        }
    }
    Ok(Weights { values, jacobian })
}

fn hyperspherical_weights(angles: &[f64]) -> Weights {
    let n_raw = angles.len();
    let n = n_raw + 1;
    let (sin, cos): (Vec<f64>, Vec<f64>) = angles.iter().map(|a| (a.sin(), a.cos())).unzip();
    // e_i = sin α_i Π_{j<i} cos α_j, last component drops the sine
    let component = |i: usize, skip: Option<usize>, diff: Option<usize>| -> f64 {
        let mut e = 1.0;
        for j in 0..i.min(n_raw) {
            if Some(j) == skip {
                e *= -sin[j];
            } else {
                e *= cos[j];
            }
        }
        if i < n_raw {
            e *= if diff == Some(i) { cos[i] } else { sin[i] };
        }
        e
    };
    let e: Vec<f64> = (0..n).map(|i| component(i, None, None)).collect();
    let mut jacobian = vec![0.0; n * n_raw];
    for i in 0..n {
        for k in 0..n_raw {
            let de = if k < i {
                component(i, Some(k), None)
            } else if k == i {
                component(i, None, Some(i))
            } else {
                0.0
            };
            jacobian[i * n_raw + k] = 2.0 * e[i] * de;
        }
    }
    Weights {
        values: e.iter().map(|v| v * v).collect(),
        jacobian,
    }
}

/// Hyperspherical angles that reproduce the given (normalized) weights.
pub fn hyperspherical_angles(weights: &[f64]) -> Vec<f64> {
    let n = weights.len();
    let mut angles = Vec::with_capacity(n.saturating_sub(1));
    let mut remaining = 1.0;
    for &w in weights.iter().take(n.saturating_sub(1)) {
        let e = w.max(0.0).sqrt();
        let ratio = if remaining > 0.0 {
            (e / remaining).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let alpha = ratio.asin();
        angles.push(alpha);
        remaining *= alpha.cos();
    }
    angles
}

/// Parameters of an `n_a`-component diagonal Gaussian mixture in `n_dim` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub scheme: Scheme,
    pub n_dim: usize,
    pub amp_raw: Vec<f64>,
    /// `n_a x n_dim`, component-major.
    pub means: Vec<f64>,
    /// `n_a x n_dim`, natural log of the per-dimension standard deviation.
    pub log_widths: Vec<f64>,
}

impl MixtureParams {
    pub fn new(scheme: Scheme, n_dim: usize, amp_raw: Vec<f64>, means: Vec<f64>, log_widths: Vec<f64>) -> Result<Self> {
        let p = Self {
            scheme,
            n_dim,
            amp_raw,
            means,
            log_widths,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from normalized weights, means and (linear) widths.
    pub fn from_weights(
        scheme: Scheme,
        n_dim: usize,
        weights: &[f64],
        means: Vec<f64>,
        widths: &[f64],
    ) -> Result<Self> {
        let amp_raw = match scheme {
            Scheme::SquaredNorm => weights.iter().map(|w| w.max(0.0).sqrt()).collect(),
            Scheme::Hyperspherical => hyperspherical_angles(weights),
        };
        Self::new(scheme, n_dim, amp_raw, means, widths.iter().map(|w| w.ln()).collect())
    }

    pub fn n_components(&self) -> usize {
        if self.n_dim == 0 {
            0
        } else {
            self.means.len() / self.n_dim
        }
    }

    pub fn n_amplitude_params(&self) -> usize {
        self.scheme.n_amplitude_params(self.n_components())
    }

    pub fn n_params(&self) -> usize {
        Self::param_count(self.scheme, self.n_components(), self.n_dim)
    }

    pub fn param_count(scheme: Scheme, n_components: usize, n_dim: usize) -> usize {
        scheme.n_amplitude_params(n_components) + 2 * n_components * n_dim
    }

    /// Flat index of mean `m_{i,ν}`.
    pub fn mean_index(&self, component: usize, dim: usize) -> usize {
        self.n_amplitude_params() + component * self.n_dim + dim
    }

    /// Flat index of log-width `log σ_{i,ν}`.
    pub fn log_width_index(&self, component: usize, dim: usize) -> usize {
        self.n_amplitude_params() + self.n_components() * self.n_dim + component * self.n_dim + dim
    }

    pub fn mean(&self, component: usize, dim: usize) -> f64 {
        self.means[component * self.n_dim + dim]
    }

    pub fn width(&self, component: usize, dim: usize) -> f64 {
        self.log_widths[component * self.n_dim + dim].exp()
    }

    pub fn weights(&self) -> Result<Vec<f64>> {
        weights(&self.amp_raw, self.scheme).map(|w| w.values)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.amp_raw);
        v.extend_from_slice(&self.means);
        v.extend_from_slice(&self.log_widths);
        v
    }

    /// Inverse of [`MixtureParams::to_vec`].
    pub fn from_slice(scheme: Scheme, n_components: usize, n_dim: usize, v: &[f64]) -> Result<Self> {
        let n_amp = scheme.n_amplitude_params(n_components);
        let block = n_components * n_dim;
        let expected = n_amp + 2 * block;
        if v.len() != expected {
            return Err(Error::Dimension {
                what: "flattened mixture parameters",
                expected,
                got: v.len(),
            });
        }
        Self::new(
            scheme,
            n_dim,
            v[..n_amp].to_vec(),
            v[n_amp..n_amp + block].to_vec(),
            v[n_amp + block..].to_vec(),
        )
    }

    /// Same scheme and shape, new values.
    pub fn with_values(&self, v: &[f64]) -> Result<Self> {
        Self::from_slice(self.scheme, self.n_components(), self.n_dim, v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dim == 0 {
            return Err(Error::InvalidParams("n_dim must be at least 1".into()));
        }
        let n_a = self.means.len() / self.n_dim;
        if n_a == 0 || self.means.len() != n_a * self.n_dim {
            return Err(Error::InvalidParams(format!(
                "means length {} is not a positive multiple of n_dim {}",
                self.means.len(),
                self.n_dim
            )));
        }
        if self.log_widths.len() != self.means.len() {
            return Err(Error::Dimension {
                what: "log widths",
                expected: self.means.len(),
                got: self.log_widths.len(),
            });
        }
        let n_amp = self.scheme.n_amplitude_params(n_a);
        if self.amp_raw.len() != n_amp {
            return Err(Error::Dimension {
                what: "raw amplitudes",
                expected: n_amp,
                got: self.amp_raw.len(),
            });
        }
        if !self.amp_raw.iter().chain(&self.means).all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("non-finite amplitude or mean".into()));
        }
        if !self.log_widths.iter().all(|v| v.exp().is_finite() && v.exp() > 0.0) {
            return Err(Error::InvalidParams("widths must be positive and finite".into()));
        }
        weights(&self.amp_raw, self.scheme).map(|_| ())
    }
}

/// Sample points, `n_data x n_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_dim: usize,
    points: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<f64>, n_dim: usize) -> Result<Self> {
        if n_dim == 0 {
            return Err(Error::InvalidDataset("n_dim must be at least 1".into()));
        }
        if points.is_empty() || points.len() % n_dim != 0 {
            return Err(Error::InvalidDataset(format!(
                "{} values do not form a non-empty set of {}-dimensional rows",
                points.len(),
                n_dim
            )));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value in row {}",
                pos / n_dim
            )));
        }
        Ok(Self { n_dim, points })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_dim = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != n_dim) {
            return Err(Error::InvalidDataset("ragged rows".into()));
        }
        Self::new(rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect(), n_dim)
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.n_dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.n_dim..(i + 1) * self.n_dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.n_dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn column(&self, dim: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[dim])
    }

    /// Per-dimension `(min, max)`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.n_dim)
            .map(|d| {
                self.column(d)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            })
            .collect()
    }

    /// Per-dimension `max - min`, floored so a constant column still has a scale.
    pub fn ranges(&self) -> Vec<f64> {
        self.bounds()
            .into_iter()
            .map(|(lo, hi)| {
                let r = hi - lo;
                if r > 0.0 {
                    r
                } else {
                    lo.abs().max(1.0) * 1e-6
                }
            })
            .collect()
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.n_dim).map(|d| self.column(d).sum::<f64>() / n).collect()
    }

    /// Per-dimension sample standard deviation (population normalization).
    pub fn std_devs(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.means()
            .into_iter()
            .enumerate()
            .map(|(d, mu)| (self.column(d).map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt())
            .collect()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut points = Vec::with_capacity(indices.len() * self.n_dim);
        for &i in indices {
            points.extend_from_slice(self.row(i));
        }
        Self::new(points, self.n_dim)
    }
}

/// Encoded coordinates of one point together with both Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderEval {
    pub n_dim: usize,
    pub n_params: usize,
    pub u: Vec<f64>,
    /// `∂F_ν/∂x_μ`, row `ν`, column `μ`; lower triangular.
    pub jac_x: Vec<f64>,
    /// `∂F_ν/∂m_k`, `n_dim x n_params`, row-major.
    pub jac_m: Vec<f64>,
    pub log_pdf: f64,
}

impl EncoderEval {
    fn zeros(n_dim: usize, n_params: usize) -> Self {
        Self {
            n_dim,
            n_params,
            u: vec![0.0; n_dim],
            jac_x: vec![0.0; n_dim * n_dim],
            jac_m: vec![0.0; n_dim * n_params],
            log_pdf: 0.0,
        }
    }

    pub fn jac_x_at(&self, row: usize, col: usize) -> f64 {
        self.jac_x[row * self.n_dim + col]
    }

    pub fn jac_m_at(&self, row: usize, param: usize) -> f64 {
        self.jac_m[row * self.n_params + param]
    }

    /// `log |det ∂F/∂x|` from the triangular diagonal.
    pub fn log_abs_det_jac_x(&self) -> f64 {
        (0..self.n_dim).map(|d| self.jac_x_at(d, d).abs().ln()).sum()
    }
}

/// Per-evaluation constants derived from [`MixtureParams`], plus scratch space.
#[derive(Debug, Clone)]
pub(crate) struct PreparedMixture {
    n_a: usize,
    n_dim: usize,
    n_amp: usize,
    n_params: usize,
    log_a: Vec<f64>,
    dweights: Vec<f64>,
    means: Vec<f64>,
    sigma: Vec<f64>,
    log_sigma: Vec<f64>,
}

/// Reusable buffers for [`PreparedMixture::encode_into`].
#[derive(Debug, Clone, Default)]
pub(crate) struct EncodeScratch {
    z: Vec<f64>,
    log_g: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cum: Vec<f64>,
    ell: Vec<f64>,
    pi: Vec<f64>,
    c: Vec<f64>,
    diff: Vec<f64>,
    tmp: Vec<f64>,
}

impl PreparedMixture {
    pub(crate) fn new(params: &MixtureParams) -> Result<Self> {
        params.validate()?;
        let w = weights(&params.amp_raw, params.scheme)?;
        Ok(Self {
            n_a: params.n_components(),
            n_dim: params.n_dim,
            n_amp: params.n_amplitude_params(),
            n_params: params.n_params(),
            log_a: w.values.iter().map(|a| a.ln()).collect(),
            dweights: w.jacobian,
            means: params.means.clone(),
            sigma: params.log_widths.iter().map(|s| s.exp()).collect(),
            log_sigma: params.log_widths.clone(),
        })
    }

    pub(crate) fn n_params(&self) -> usize {
        self.n_params
    }

    pub(crate) fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub(crate) fn new_eval(&self) -> EncoderEval {
        EncoderEval::zeros(self.n_dim, self.n_params)
    }

    fn fill_component_terms(&self, x: &[f64], s: &mut EncodeScratch) {
        let (n_a, d) = (self.n_a, self.n_dim);
        for buf in [&mut s.z, &mut s.log_g, &mut s.lower, &mut s.upper] {
            buf.resize(n_a * d, 0.0);
        }
        for i in 0..n_a {
            for nu in 0..d {
                let k = i * d + nu;
                let z = (x[nu] - self.means[k]) / self.sigma[k];
                s.z[k] = z;
                s.log_g[k] = log_std_normal_pdf(z) - self.log_sigma[k];
                let (lo, hi) = std_normal_tails(z);
                s.lower[k] = lo;
                s.upper[k] = hi;
            }
        }
    }

    /// Mixture log-density only; cheaper than a full encode.
    pub(crate) fn log_pdf(&self, x: &[f64], s: &mut EncodeScratch) -> f64 {
        let (n_a, d) = (self.n_a, self.n_dim);
        s.ell.resize(n_a, 0.0);
        for i in 0..n_a {
            let mut l = self.log_a[i];
            for nu in 0..d {
                let k = i * d + nu;
                let z = (x[nu] - self.means[k]) / self.sigma[k];
                l += log_std_normal_pdf(z) - self.log_sigma[k];
            }
            s.ell[i] = l;
        }
        log_sum_exp(&s.ell)
    }

    pub(crate) fn encode_into(&self, x: &[f64], s: &mut EncodeScratch, out: &mut EncoderEval) {
        let (n_a, d, n_amp, n_p) = (self.n_a, self.n_dim, self.n_amp, self.n_params);
        debug_assert_eq!(x.len(), d);
        self.fill_component_terms(x, s);
        for buf in [&mut s.cum, &mut s.ell, &mut s.pi, &mut s.c, &mut s.diff, &mut s.tmp] {
            buf.resize(n_a, 0.0);
        }
        s.cum.iter_mut().for_each(|v| *v = 0.0);
        out.jac_x.iter_mut().for_each(|v| *v = 0.0);
        out.jac_m.iter_mut().for_each(|v| *v = 0.0);
        let mean_base = n_amp;
        let width_base = n_amp + n_a * d;

        for lam in 0..d {
            for i in 0..n_a {
                s.ell[i] = self.log_a[i] + s.cum[i];
            }
            let norm = log_sum_exp(&s.ell);
            let (mut f_lo, mut f_hi) = (0.0, 0.0);
            for i in 0..n_a {
                s.pi[i] = (s.ell[i] - norm).exp();
                s.c[i] = (s.cum[i] - norm).exp();
                f_lo += s.pi[i] * s.lower[i * d + lam];
                f_hi += s.pi[i] * s.upper[i * d + lam];
            }
            out.u[lam] = f_lo.min(1.0);
            for i in 0..n_a {
                s.diff[i] = if f_lo <= 0.5 {
                    s.lower[i * d + lam] - f_lo
                } else {
                    f_hi - s.upper[i * d + lam]
                };
            }
            let row = lam * n_p;

            // conditional density and the mean/width columns in dimension λ
            let mut density = 0.0;
            for j in 0..n_a {
                let k = j * d + lam;
                let pg = (s.ell[j] - norm + s.log_g[k]).exp();
                density += pg;
                out.jac_m[row + mean_base + k] = -pg;
                out.jac_m[row + width_base + k] = -s.pi[j] * s.z[k] * std_normal_pdf(s.z[k]);
            }
            out.jac_x[lam * d + lam] = density;

            // dependence through the responsibilities on earlier dimensions
            for mu in 0..lam {
                let mut dx = 0.0;
                for j in 0..n_a {
                    let k = j * d + mu;
                    let w = s.pi[j] * s.diff[j];
                    let zs = s.z[k] / self.sigma[k];
                    dx -= w * zs;
                    out.jac_m[row + mean_base + k] = w * zs;
                    out.jac_m[row + width_base + k] = w * (s.z[k] * s.z[k] - 1.0);
                }
                out.jac_x[lam * d + mu] = dx;
            }

            // amplitudes: ∂F/∂a_j = c_j (Φ_j - F), chained through the weight Jacobian
            for j in 0..n_a {
                s.tmp[j] = s.c[j] * s.diff[j];
            }
            for r in 0..n_amp {
                let mut acc = 0.0;
                for j in 0..n_a {
                    acc += s.tmp[j] * self.dweights[j * n_amp + r];
                }
                out.jac_m[row + r] = acc;
            }

            for i in 0..n_a {
                s.cum[i] += s.log_g[i * d + lam];
            }
        }
        for i in 0..n_a {
            s.ell[i] = self.log_a[i] + s.cum[i];
        }
        out.log_pdf = log_sum_exp(&s.ell);
    }
}

/// Mixture log-density `log Σ_i a_i Π_ν N(x_ν; m_iν, σ_iν²)`.
pub fn log_pdf(x: &[f64], params: &MixtureParams) -> Result<f64> {
    check_point(x, params)?;
    let prep = PreparedMixture::new(params)?;
    Ok(prep.log_pdf(x, &mut EncodeScratch::default()))
}

/// Encodes `x` and evaluates the spatial and parametric Jacobians.
pub fn encode(x: &[f64], params: &MixtureParams) -> Result<EncoderEval> {
    check_point(x, params)?;
    let prep = PreparedMixture::new(params)?;
    let mut out = prep.new_eval();
    prep.encode_into(x, &mut EncodeScratch::default(), &mut out);
    Ok(out)
}

fn check_point(x: &[f64], params: &MixtureParams) -> Result<()> {
    if x.len() != params.n_dim {
        return Err(Error::Dimension {
            what: "data point",
            expected: params.n_dim,
            got: x.len(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite data point".into()));
    }
    Ok(())
}

/// Spatial Jacobian rebuilt as `-Σ_j ∂F/∂m_{j,μ}` from the mean columns.
///
/// A consistency check on [`encode`]; the production path uses `jac_x` directly.
pub fn jac_x_from_means(eval: &EncoderEval, params: &MixtureParams) -> Vec<f64> {
    let d = eval.n_dim;
    let mut out = vec![0.0; d * d];
    for nu in 0..d {
        for mu in 0..d {
            out[nu * d + mu] = -(0..params.n_components())
                .map(|j| eval.jac_m_at(nu, params.mean_index(j, mu)))
                .sum::<f64>();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn single(mean: f64, sigma: f64) -> MixtureParams {
        MixtureParams::new(Scheme::SquaredNorm, 1, vec![1.0], vec![mean], vec![sigma.ln()]).unwrap()
    }

    #[test]
    fn squared_norm_weights_examples() {
        let w = weights(&[1.0; 4], Scheme::SquaredNorm).unwrap();
        assert_eq!(w.values, vec![0.25; 4]);
        let w = weights(&[3.0, 4.0], Scheme::SquaredNorm).unwrap();
        assert!((w.values[0] - 9.0 / 25.0).abs() < 1e-15);
        assert!((w.values[1] - 16.0 / 25.0).abs() < 1e-15);
        assert_eq!(
            weights(&[0.0, 0.0], Scheme::SquaredNorm),
            Err(Error::DegenerateAmplitudes)
        );
    }

    #[test]
    fn hyperspherical_weights_examples() {
        let w = weights(&[0.0, 0.0, 0.0], Scheme::Hyperspherical).unwrap();
        assert_eq!(w.values, vec![0.0, 0.0, 0.0, 1.0]);
        let w = weights(&[PI / 4.0], Scheme::Hyperspherical).unwrap();
        assert!((w.values[0] - 0.5).abs() < 1e-15 && (w.values[1] - 0.5).abs() < 1e-15);
        let single = weights(&[], Scheme::Hyperspherical).unwrap();
        assert_eq!(single.values, vec![1.0]);
    }

    #[test]
    fn weight_jacobians_match_finite_differences() {
        let cases: [(&[f64], Scheme); 2] = [
            (&[0.7, -1.3, 0.2, 2.0], Scheme::SquaredNorm),
            (&[0.4, 1.1, 2.5], Scheme::Hyperspherical),
        ];
        for (raw, scheme) in cases {
            let w = weights(raw, scheme).unwrap();
            let n_raw = raw.len();
            for k in 0..n_raw {
                let h = 1e-6;
                let mut p = raw.to_vec();
                p[k] += h;
                let up = weights(&p, scheme).unwrap().values;
                p[k] -= 2.0 * h;
                let dn = weights(&p, scheme).unwrap().values;
                for i in 0..w.values.len() {
                    let fd = (up[i] - dn[i]) / (2.0 * h);
                    assert!((fd - w.jacobian[i * n_raw + k]).abs() < 1e-8, "{scheme:?} {i} {k}");
                }
            }
        }
    }

    #[test]
    fn hyperspherical_angles_round_trip() {
        let target = [0.1, 0.6, 0.05, 0.25];
        let back = weights(&hyperspherical_angles(&target), Scheme::Hyperspherical).unwrap();
        for (a, b) in back.values.iter().zip(&target) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn standard_normal_mode_log_density() {
        let lp = log_pdf(&[0.0], &single(0.0, 1.0)).unwrap();
        assert!((lp + 0.918_938_533_204_672_8).abs() < 1e-15);
    }

    #[test]
    fn far_separated_mixture_does_not_underflow() {
        let p = MixtureParams::new(
            Scheme::SquaredNorm,
            1,
            vec![1.0, 1.0],
            vec![-10.0, 10.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let lp = log_pdf(&[10.0], &p).unwrap();
        assert!((lp - (0.5f64.ln() - 0.918_938_533_204_672_8)).abs() < 1e-12);
        // 60 sigma from the nearer component: the density underflows but its log does not
        let far = log_pdf(&[70.0], &p).unwrap();
        assert!(far.is_finite());
        assert!((far - (0.5f64.ln() - 0.918_938_533_204_672_8 - 1800.0)).abs() < 1e-9);
    }

    #[test]
    fn median_and_limits_of_single_gaussian() {
        let p = single(1.5, 0.7);
        assert_eq!(encode(&[1.5], &p).unwrap().u, vec![0.5]);
        let mut last = 0.0;
        for k in -40..=40 {
            let u = encode(&[1.5 + 0.25 * k as f64], &p).unwrap().u[0];
            assert!(u >= last && (0.0..=1.0).contains(&u));
            last = u;
        }
        assert!(encode(&[-100.0], &p).unwrap().u[0] < 1e-300);
        assert_eq!(encode(&[100.0], &p).unwrap().u[0], 1.0);
    }

    #[test]
    fn single_gaussian_mean_derivative_is_negative_density() {
        let p = single(0.3, 1.2);
        for &x in &[-2.0, 0.0, 0.3, 1.7] {
            let e = encode(&[x], &p).unwrap();
            let from_means = jac_x_from_means(&e, &p);
            assert_eq!(from_means[0], e.jac_x[0]);
            assert!((e.jac_x[0] - e.log_pdf.exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn translation_leaves_encoding_unchanged() {
        let p = MixtureParams::new(
            Scheme::SquaredNorm,
            2,
            vec![1.0, 0.6],
            vec![0.0, 1.0, 2.0, -1.0],
            vec![0.1, -0.2, 0.3, 0.0],
        )
        .unwrap();
        let shift = [0.75, -0.5];
        let mut q = p.clone();
        for i in 0..2 {
            for d in 0..2 {
                q.means[i * 2 + d] += shift[d];
            }
        }
        let x = [0.4, 0.2];
        let a = encode(&x, &p).unwrap();
        let b = encode(&[x[0] + shift[0], x[1] + shift[1]], &q).unwrap();
        for (u, v) in a.u.iter().zip(&b.u) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!((a.log_pdf - b.log_pdf).abs() < 1e-12);
        for (u, v) in a.jac_x.iter().zip(&b.jac_x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_round_trip_and_validation() {
        let p = MixtureParams::new(
            Scheme::Hyperspherical,
            2,
            vec![0.3],
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.0; 4],
        )
        .unwrap();
        let v = p.to_vec();
        assert_eq!(v.len(), p.n_params());
        assert_eq!(MixtureParams::from_slice(p.scheme, 2, 2, &v).unwrap(), p);
        assert!(MixtureParams::from_slice(p.scheme, 2, 2, &v[1..]).is_err());
        let mut bad = p.clone();
        bad.log_widths[0] = f64::INFINITY;
        assert!(bad.validate().is_err());
        assert_eq!(p.mean_index(1, 0), 3);
        assert_eq!(p.log_width_index(0, 1), 6);
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(Dataset::new(vec![], 1).is_err());
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], 1).is_err());
        let d = Dataset::from_rows(&[[1.0, 2.0], [3.0, 6.0]]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.ranges(), vec![2.0, 4.0]);
        assert_eq!(d.std_devs(), vec![1.0, 2.0]);
    }
}
