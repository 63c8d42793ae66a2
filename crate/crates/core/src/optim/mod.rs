//! Staged minimization of `Q` over model parameters and truncation ranges.
//!
//! The search vector is the flattened model (`amplitudes | means | log widths`)
//! followed by `log Δm`. Four stages run in sequence, each starting from the
//! best point so far: a bounded simplex, a separable CMA evolution strategy,
//! a second simplex with a smaller step, and a box-constrained L-BFGS polish
//! on finite-difference gradients. Between stages the point is clamped into the
//! bounds and the truncation ranges are re-solved for the current model.

mod evolution;
mod polish;
mod profile;
mod reduce;
mod simplex;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use polish::{numeric_gradient, Gradient};

use crate::bitcost::{collect_terms, global_regularizer, PointTerm, Workspace, DELTA_M_FLOOR};
use crate::mixture::{hyperspherical_angles, EncodeScratch, PreparedMixture};
use crate::{q_total_with_precision, Dataset, DeltaM, Error, MixtureParams, QBreakdown, Result, Scheme, VariationMode};

pub(crate) struct StageOutcome {
    pub(crate) x: Vec<f64>,
    pub(crate) value: f64,
    pub(crate) evaluations: usize,
}

pub(crate) fn clamp_unit(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// What the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FitObjective {
    /// The full bit count `Q`.
    #[default]
    BitCount,
    /// Negative log-likelihood only; truncation ranges are fitted afterwards
    /// for reporting.
    LikelihoodOnly,
}

/// Box bounds over the search vector `params | log Δm`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    /// Data-driven defaults, scaled by each dimension's range.
    pub fn for_data(dataset: &Dataset, scheme: Scheme, n_components: usize) -> Self {
        let d = dataset.n_dim();
        let n_amp = scheme.n_amplitude_params(n_components);
        let n_p = MixtureParams::param_count(scheme, n_components, d);
        let (amp_lo, amp_hi) = match scheme {
            Scheme::SquaredNorm => (-10.0, 10.0),
            Scheme::Hyperspherical => (0.0, 2.0 * PI),
        };
        let bounds = dataset.bounds();
        let ranges = dataset.ranges();
        let mut lower = vec![amp_lo; n_amp];
        let mut upper = vec![amp_hi; n_amp];
        for _ in 0..n_components {
            for nu in 0..d {
                lower.push(bounds[nu].0 - 0.5 * ranges[nu]);
                upper.push(bounds[nu].1 + 0.5 * ranges[nu]);
            }
        }
        for _ in 0..n_components {
            for r in &ranges {
                lower.push((1e-4 * r).ln());
                upper.push((2.0 * r).ln());
            }
        }
        lower.extend(core::iter::repeat_n(DELTA_M_FLOOR.ln(), n_p));
        upper.extend(core::iter::repeat_n(0.0, n_p));
        Self { lower, upper }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_components: usize,
    pub scheme: Scheme,
    /// Objective evaluations for simplex, evolution, refinement, polish.
    pub stage_budgets: [usize; 4],
    /// `None` uses [`Bounds::for_data`].
    pub bounds: Option<Bounds>,
    pub seed: u64,
    pub mode: VariationMode,
    pub objective: FitObjective,
    /// Weight below which a component is not counted and may be pruned.
    pub significant_amplitude: f64,
    /// Width floor as a fraction of the per-dimension data range.
    pub min_width_fraction: f64,
    /// Uniform data precision.
    pub delta_x: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_components: 5,
            scheme: Scheme::SquaredNorm,
            stage_budgets: [3000, 6000, 3000, 3000],
            bounds: None,
            seed: 0,
            mode: VariationMode::Global,
            objective: FitObjective::BitCount,
            significant_amplitude: 0.01,
            min_width_fraction: 1e-6,
            delta_x: 1.0,
        }
    }
}

impl FitConfig {
    /// Splits a total evaluation budget 1:2:1:1 over the stages.
    pub fn with_total_budget(mut self, total: usize) -> Self {
        let unit = (total / 5).max(1);
        self.stage_budgets = [unit, 2 * unit, unit, unit];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_components == 0 {
            return Err(Error::InvalidConfig("max_components must be at least 1".into()));
        }
        if self.stage_budgets.contains(&0) {
            return Err(Error::InvalidConfig("stage budgets must be positive".into()));
        }
        if !(self.significant_amplitude >= 0.0 && self.significant_amplitude < 1.0) {
            return Err(Error::InvalidConfig("significant_amplitude must be in [0, 1)".into()));
        }
        if !(self.min_width_fraction >= 0.0 && self.min_width_fraction.is_finite()) {
            return Err(Error::InvalidConfig("min_width_fraction must be non-negative".into()));
        }
        if !(self.delta_x > 0.0 && self.delta_x.is_finite()) {
            return Err(Error::InvalidConfig("delta_x must be positive".into()));
        }
        if let Some(b) = &self.bounds {
            if b.lower.len() != b.upper.len() {
                return Err(Error::InvalidConfig("bound vectors differ in length".into()));
            }
            if !b
                .lower
                .iter()
                .zip(&b.upper)
                .all(|(l, h)| l.is_finite() && h.is_finite() && l < h)
            {
                return Err(Error::InvalidConfig("bounds must be finite with low < high".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub name: String,
    /// Best objective value after the stage.
    pub best_q: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: MixtureParams,
    pub delta_m: DeltaM,
    pub q: QBreakdown,
    pub mode: VariationMode,
    pub stage_history: Vec<StageReport>,
    /// Component indices removed by pruning, in the numbering at removal time.
    pub pruned: Vec<usize>,
    /// A removed component had collapsed onto a point while carrying weight.
    pub runaway_width: bool,
}

impl FitResult {
    pub fn is_valid(&self) -> bool {
        self.q.valid && !self.runaway_width
    }

    pub fn weights(&self) -> Vec<f64> {
        self.params.weights().unwrap_or_default()
    }

    pub fn significant_components(&self, threshold: f64) -> usize {
        self.weights().iter().filter(|w| **w >= threshold).count()
    }
}

/// The objective over the search vector, plus unit-box mapping.
struct Problem<'a> {
    data: &'a Dataset,
    scheme: Scheme,
    n_a: usize,
    n_p: usize,
    mode: VariationMode,
    delta_x: f64,
    kind: FitObjective,
    lo: Vec<f64>,
    hi: Vec<f64>,
    terms: Vec<PointTerm>,
    ws: Option<Workspace>,
    scratch: EncodeScratch,
    evals: usize,
}

impl<'a> Problem<'a> {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn params(&self, theta: &[f64]) -> Result<MixtureParams> {
        MixtureParams::from_slice(self.scheme, self.n_a, self.data.n_dim(), &theta[..self.n_p])
    }

    fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| ((theta[i] - self.lo[i]) / (self.hi[i] - self.lo[i])).clamp(0.0, 1.0))
            .collect()
    }

    fn from_unit(&self, t: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.lo[i] + t[i].clamp(0.0, 1.0) * (self.hi[i] - self.lo[i]))
            .collect()
    }

    fn clamp(&self, theta: &mut [f64]) {
        for i in 0..self.dim() {
            theta[i] = theta[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    fn eval(&mut self, theta: &[f64]) -> f64 {
        self.evals += 1;
        let Ok(p) = self.params(theta) else {
            return f64::INFINITY;
        };
        let Ok(prep) = PreparedMixture::new(&p) else {
            return f64::INFINITY;
        };
        let (n, d) = (self.data.len(), self.data.n_dim());
        let precision = (n * d) as f64 * self.delta_x.ln();
        match self.kind {
            FitObjective::LikelihoodOnly => {
                let ll: f64 = self.data.rows().map(|x| prep.log_pdf(x, &mut self.scratch)).sum();
                if ll.is_finite() {
                    -ll - precision
                } else {
                    f64::INFINITY
                }
            }
            FitObjective::BitCount => {
                let log_dm = &theta[self.n_p..];
                let dm: Vec<f64> = log_dm.iter().map(|v| v.exp()).collect();
                let ws = self.ws.get_or_insert_with(|| Workspace::new(&prep));
                collect_terms(&prep, self.data, &dm, self.delta_x, ws, &mut self.terms);
                let q_l = -self.terms.iter().map(|t| t.log_pdf).sum::<f64>() - precision;
                let q_delta = -log_dm.iter().sum::<f64>();
                if self.terms.iter().any(|t| t.singular) || !q_l.is_finite() {
                    return f64::INFINITY;
                }
                let q_r = match self.mode {
                    VariationMode::Local => {
                        let mut q = 0.0;
                        for t in &self.terms {
                            if !(t.local_corr > 0.0) {
                                return f64::INFINITY;
                            }
                            q -= t.local_corr.ln();
                        }
                        q
                    }
                    VariationMode::Global => {
                        let s = self.terms.iter().map(|t| t.sum_log_b).sum();
                        global_regularizer(s, false, n, d).0
                    }
                };
                q_l + q_delta + q_r
            }
        }
    }

    fn eval_unit(&mut self, t: &[f64]) -> f64 {
        let theta = self.from_unit(t);
        self.eval(&theta)
    }

    /// Re-solves `log Δm` for the model in `theta`; keeps it only if `Q` drops.
    fn refit_ranges(&mut self, theta: &mut Vec<f64>, best: &mut f64) {
        if self.kind != FitObjective::BitCount {
            return;
        }
        let Ok(p) = self.params(theta) else { return };
        let Ok(prep) = PreparedMixture::new(&p) else { return };
        let Some(table) = profile::ShiftTable::new(&prep, self.data, self.delta_x) else {
            return;
        };
        let start = theta[self.n_p..].to_vec();
        let Some((v, _)) = profile::best_log_delta_m(&table, self.mode, Some(&start)) else {
            return;
        };
        let mut candidate = theta.clone();
        candidate[self.n_p..].copy_from_slice(&v);
        self.clamp(&mut candidate);
        let q = self.eval(&candidate);
        if q < *best {
            *best = q;
            *theta = candidate;
        }
    }
}

/// Central-difference gradients of the problem, limited by an evaluation budget.
struct NumericSmooth<'p, 'a> {
    problem: &'p mut Problem<'a>,
    budget: usize,
    used: usize,
    rel_step: f64,
}

impl Smooth for NumericSmooth<'_, '_> {
    fn value(&mut self, x: &[f64]) -> Option<f64> {
        if self.used >= self.budget {
            return None;
        }
        self.used += 1;
        Some(self.problem.eval(x))
    }

    fn gradient(&mut self, x: &[f64], fx: f64, out: &mut [f64]) -> Option<()> {
        if self.used + 2 * x.len() > self.budget {
            return None;
        }
        self.used += 2 * x.len();
        let problem = &mut *self.problem;
        let g = polish::gradient_at(&mut |p: &[f64]| problem.eval(p), x, fx, self.rel_step);
        out.copy_from_slice(&g.values);
        Some(())
    }
}

use polish::Smooth;

fn kmeans_pp_means<R: Rng>(data: &Dataset, k: usize, rng: &mut R) -> Vec<f64> {
    let d = data.n_dim();
    let n = data.len();
    let mut means = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    means.extend_from_slice(data.row(first));
    let mut dist: Vec<f64> = data
        .rows()
        .map(|x| x.iter().zip(&means[..d]).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, w) in dist.iter().enumerate() {
                if target < *w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(pick).to_vec();
        for (dv, x) in dist.iter_mut().zip(data.rows()) {
            let e: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            *dv = dv.min(e);
        }
        means.extend_from_slice(&c);
    }
    means
}

fn initial_params<R: Rng>(data: &Dataset, config: &FitConfig, rng: &mut R) -> Result<MixtureParams> {
    let k = config.max_components;
    let d = data.n_dim();
    let means = kmeans_pp_means(data, k, rng);
    let sd = data.std_devs();
    let ranges = data.ranges();
    let widths: Vec<f64> = (0..k)
        .flat_map(|_| (0..d).map(|nu| (sd[nu] / k as f64).max(1e-3 * ranges[nu])))
        .collect();
    MixtureParams::from_weights(config.scheme, d, &vec![1.0 / k as f64; k], means, &widths)
}

/// Minimizes `Q` (or the negative log-likelihood) for `dataset`.
///
/// Deterministic for a fixed `config.seed`.
pub fn fit(dataset: &Dataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidDataset("empty dataset".into()));
    }
    let k = config.max_components;
    let n_p = MixtureParams::param_count(config.scheme, k, dataset.n_dim());
    let bounds = match &config.bounds {
        Some(b) => b.clone(),
        None => Bounds::for_data(dataset, config.scheme, k),
    };
    if bounds.lower.len() != 2 * n_p {
        return Err(Error::Dimension {
            what: "bounds",
            expected: 2 * n_p,
            got: bounds.lower.len(),
        });
    }
    let dim = match config.objective {
        FitObjective::BitCount => 2 * n_p,
        FitObjective::LikelihoodOnly => n_p,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut problem = Problem {
        data: dataset,
        scheme: config.scheme,
        n_a: k,
        n_p,
        mode: config.mode,
        delta_x: config.delta_x,
        kind: config.objective,
        lo: bounds.lower[..dim].to_vec(),
        hi: bounds.upper[..dim].to_vec(),
        terms: Vec::with_capacity(dataset.len()),
        ws: None,
        scratch: EncodeScratch::default(),
        evals: 0,
    };

    let init = initial_params(dataset, config, &mut rng)?;
    let mut theta = init.to_vec();
    if config.objective == FitObjective::BitCount {
        theta.extend(core::iter::repeat_n(0.5f64.ln(), n_p));
    }
    problem.clamp(&mut theta);
    let mut best = problem.eval(&theta);
    problem.refit_ranges(&mut theta, &mut best);

    let mut history = Vec::with_capacity(4);
    let [b1, b2, b3, b4] = config.stage_budgets;

    let mut record = |problem: &mut Problem, out: StageOutcome, name: &str, theta: &mut Vec<f64>, best: &mut f64| {
        if out.value < *best {
            *best = out.value;
            *theta = problem.from_unit(&out.x);
        }
        problem.clamp(theta);
        problem.refit_ranges(theta, best);
        history.push(StageReport {
            name: name.into(),
            best_q: *best,
            evaluations: out.evaluations,
        });
    };

    let t = problem.to_unit(&theta);
    let out = simplex::minimize(
        &mut |x: &[f64]| problem.eval_unit(x),
        &t,
        Some(best),
        b1,
        &simplex::SimplexOptions::default(),
    );
    record(&mut problem, out, "simplex", &mut theta, &mut best);

    let t = problem.to_unit(&theta);
    let out = evolution::minimize(
        &mut |x: &[f64]| problem.eval_unit(x),
        &t,
        best,
        b2,
        &mut rng,
        &evolution::EvolutionOptions::default(),
    );
    record(&mut problem, out, "evolution", &mut theta, &mut best);

    // Refinement also restarts from a greedily merged or reduced model, so
    // that a peak split over two components can collapse into one.
    let mut starts = vec![(best, theta.clone())];
    if config.objective == FitObjective::BitCount && k > 1 {
        if let Some(reduced) = reduce::greedy(&mut problem, &theta, best, k - 1) {
            starts.push(reduced);
        }
    }
    let share = (b3 / starts.len()).max(1);
    let mut refined: Option<StageOutcome> = None;
    for (q0, start) in &starts {
        let t = problem.to_unit(start);
        let out = simplex::minimize(
            &mut |x: &[f64]| problem.eval_unit(x),
            &t,
            Some(*q0),
            share,
            &simplex::SimplexOptions {
                initial_step: 0.01,
                min_step: 1e-6,
            },
        );
        refined = Some(match refined {
            Some(prev) if prev.value <= out.value => StageOutcome {
                evaluations: prev.evaluations + out.evaluations,
                ..prev
            },
            Some(prev) => StageOutcome {
                evaluations: prev.evaluations + out.evaluations,
                ..out
            },
            None => out,
        });
    }
    if let Some(out) = refined {
        record(&mut problem, out, "refine", &mut theta, &mut best);
    }

    let (lo, hi) = (problem.lo.clone(), problem.hi.clone());
    let mut smooth = NumericSmooth {
        problem: &mut problem,
        budget: b4,
        used: 0,
        rel_step: 1e-6,
    };
    let out = polish::minimize(&mut smooth, &lo, &hi, &theta, &polish::PolishOptions::default());
    let used = smooth.used;
    if out.value < best {
        best = out.value;
        theta = out.x;
    }
    problem.clamp(&mut theta);
    problem.refit_ranges(&mut theta, &mut best);
    history.push(StageReport {
        name: "polish".into(),
        best_q: best,
        evaluations: used,
    });

    let params = problem.params(&theta)?;
    let delta_m = match config.objective {
        FitObjective::BitCount => DeltaM::from_log(theta[n_p..].to_vec())?,
        FitObjective::LikelihoodOnly => best_delta_m(dataset, &params, config.mode, config.delta_x)?,
    };
    let q = q_total_with_precision(dataset, &params, &delta_m, config.mode, config.delta_x)?;
    if config.objective == FitObjective::BitCount && !q.valid {
        return Err(Error::FitFailure {
            best_q_l: q.q_l,
            best_q_delta: q.q_delta,
        });
    }
    Ok(FitResult {
        params,
        delta_m,
        q,
        mode: config.mode,
        stage_history: history,
        pruned: Vec::new(),
        runaway_width: false,
    })
}

/// Truncation ranges minimizing `Q` for a fixed model.
///
/// Falls back to a uniform range at the floor if no range makes `Q` valid.
pub fn best_delta_m(dataset: &Dataset, params: &MixtureParams, mode: VariationMode, delta_x: f64) -> Result<DeltaM> {
    let prep = PreparedMixture::new(params)?;
    let best =
        profile::ShiftTable::new(&prep, dataset, delta_x).and_then(|t| profile::best_log_delta_m(&t, mode, None));
    match best {
        Some((v, _)) => DeltaM::from_log(v),
        None => DeltaM::uniform(params.n_params(), DELTA_M_FLOOR),
    }
}

/// Removes insignificant and collapsed components.
///
/// A component goes if its weight is below `config.significant_amplitude` or
/// any width is below `config.min_width_fraction` times the data range. The
/// survivors keep their ranges; `Q` is recomputed and the ranges are repaired
/// if the smaller model made it invalid.
pub fn prune(fit: &FitResult, dataset: &Dataset, config: &FitConfig) -> Result<FitResult> {
    let p = &fit.params;
    let (k, d) = (p.n_components(), p.n_dim);
    let w = p.weights()?;
    let ranges = dataset.ranges();
    let mut removed = Vec::new();
    let mut runaway = false;
    for i in 0..k {
        let narrow = (0..d).any(|nu| p.width(i, nu) < config.min_width_fraction * ranges[nu]);
        let light = w[i] < config.significant_amplitude;
        if narrow || light {
            removed.push(i);
            runaway |= narrow && !light;
        }
    }
    if removed.is_empty() {
        return Ok(fit.clone());
    }
    if removed.len() == k {
        return Err(Error::PruneAll);
    }
    let keep: Vec<usize> = (0..k).filter(|i| !removed.contains(i)).collect();
    let means: Vec<f64> = keep
        .iter()
        .flat_map(|&i| p.means[i * d..(i + 1) * d].to_vec())
        .collect();
    let log_widths: Vec<f64> = keep
        .iter()
        .flat_map(|&i| p.log_widths[i * d..(i + 1) * d].to_vec())
        .collect();
    let amp_raw = match p.scheme {
        Scheme::SquaredNorm => keep.iter().map(|&i| p.amp_raw[i]).collect(),
        Scheme::Hyperspherical => {
            let total: f64 = keep.iter().map(|&i| w[i]).sum();
            hyperspherical_angles(&keep.iter().map(|&i| w[i] / total).collect::<Vec<_>>())
        }
    };
    let params = MixtureParams::new(p.scheme, d, amp_raw, means, log_widths)?;

    let old = fit.delta_m.log_values();
    let n_amp_old = p.n_amplitude_params();
    let mut log_dm: Vec<f64> = match p.scheme {
        Scheme::SquaredNorm => keep.iter().map(|&i| old[i]).collect(),
        Scheme::Hyperspherical => old[..params.n_amplitude_params()].to_vec(),
    };
    for block in 0..2 {
        let base = n_amp_old + block * k * d;
        for &i in &keep {
            log_dm.extend_from_slice(&old[base + i * d..base + (i + 1) * d]);
        }
    }
    let mut delta_m = DeltaM::from_log(log_dm)?;
    let mut q = q_total_with_precision(dataset, &params, &delta_m, fit.mode, config.delta_x)?;
    if !q.valid {
        let r = repair_delta_m(dataset, &params, &delta_m, fit.mode)?;
        delta_m = r.delta_m;
        q = r.q;
    }
    let mut pruned = fit.pruned.clone();
    pruned.extend_from_slice(&removed);
    Ok(FitResult {
        params,
        delta_m,
        q,
        mode: fit.mode,
        stage_history: fit.stage_history.clone(),
        pruned,
        runaway_width: fit.runaway_width || runaway,
    })
}

/// Outcome of [`repair_delta_m`].
#[derive(Debug, Clone, PartialEq)]
pub struct Repair {
    pub delta_m: DeltaM,
    /// Uniform factor applied to every range.
    pub scale: f64,
    pub q: QBreakdown,
}

/// Shrinks all truncation ranges by one common factor until `Q` on `dataset`
/// is valid again.
///
/// Validity is monotone in the factor because every `b_iμ` is linear in it.
/// The largest valid factor is found by bisection on its logarithm. Already
/// valid input comes back unchanged with factor 1.
pub fn repair_delta_m(
    dataset: &Dataset,
    params: &MixtureParams,
    delta_m: &DeltaM,
    mode: VariationMode,
) -> Result<Repair> {
    let q = crate::q_total(dataset, params, delta_m, mode)?;
    if q.valid {
        return Ok(Repair {
            delta_m: delta_m.clone(),
            scale: 1.0,
            q,
        });
    }
    let prep = PreparedMixture::new(params)?;
    let table = profile::ShiftTable::new(&prep, dataset, 1.0).ok_or(Error::Irreparable { scale: 1.0 })?;
    let v = delta_m.log_values();
    let cost = |ls: f64| {
        let shifted: Vec<f64> = v.iter().map(|x| x + ls).collect();
        table.cost(&shifted, mode, None)
    };
    let (mut lo, mut hi) = (DELTA_M_FLOOR.ln(), 0.0);
    if !cost(lo).is_finite() {
        return Err(Error::Irreparable { scale: DELTA_M_FLOOR });
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if cost(mid).is_finite() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let repaired = delta_m.scaled(lo.exp());
    let q = crate::q_total(dataset, params, &repaired, mode)?;
    if !q.valid {
        return Err(Error::Irreparable { scale: lo.exp() });
    }
    Ok(Repair {
        delta_m: repaired,
        scale: lo.exp(),
        q,
    })
}
