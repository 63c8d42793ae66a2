//! Samples from diagonal Gaussian mixtures.

use bitfit_core::{Dataset, MixtureParams, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub width: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub components: Vec<Component>,
    /// Keep only this coordinate of every draw.
    #[serde(default)]
    pub project_to: Option<usize>,
}

impl Default for GeneratorSpec {
    /// One dominant component and two smaller ones, overlapping slightly.
    fn default() -> Self {
        let c = |weight, mean: [f64; 2]| Component {
            weight,
            mean: mean.to_vec(),
            width: vec![1.0, 1.0],
        };
        Self {
            components: vec![c(0.8, [0.0, 0.0]), c(0.1, [2.5, 2.5]), c(0.1, [-2.5, 2.5])],
            project_to: None,
        }
    }
}

impl GeneratorSpec {
    /// The default mixture seen along its first axis.
    pub fn default_1d() -> Self {
        Self {
            project_to: Some(0),
            ..Self::default()
        }
    }

    /// Dimension of the generated points.
    pub fn n_dim(&self) -> usize {
        if self.project_to.is_some() {
            1
        } else {
            self.components.first().map_or(0, |c| c.mean.len())
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let Some(first) = self.components.first() else {
            return Err(Error::Spec("no components".into()));
        };
        let d = first.mean.len();
        if d == 0 {
            return Err(Error::Spec("components have no coordinates".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != d || c.width.len() != d {
                return Err(Error::Spec(format!("component {i} has the wrong dimension")));
            }
            if !(c.weight >= 0.0) || !c.mean.iter().all(|v| v.is_finite()) {
                return Err(Error::Spec(format!("component {i} has a bad weight or mean")));
            }
            if !c.width.iter().all(|w| *w > 0.0 && w.is_finite()) {
                return Err(Error::Spec(format!("component {i} has a non-positive width")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!("weights sum to {total}, not 1")));
        }
        if let Some(p) = self.project_to {
            if p >= d {
                return Err(Error::Spec(format!("projection axis {p} out of range")));
            }
        }
        Ok(())
    }

    /// `n` points, reproducible for a given seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset, Error> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.components[0].mean.len();
        let mut points = Vec::with_capacity(n * self.n_dim());
        let mut row = vec![0.0; d];
        for _ in 0..n {
            let c = self.pick(rng.random::<f64>());
            for (nu, v) in row.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v = c.mean[nu] + c.width[nu] * z;
            }
            match self.project_to {
                Some(p) => points.push(row[p]),
                None => points.extend_from_slice(&row),
            }
        }
        Ok(Dataset::new(points, self.n_dim())?)
    }

    fn pick(&self, u: f64) -> &Component {
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                return c;
            }
        }
        self.components.last().expect("validated non-empty")
    }

    /// The generating density as mixture parameters (projected if requested).
    pub fn true_params(&self) -> Result<MixtureParams, Error> {
        self.validate()?;
        let dims: Vec<usize> = match self.project_to {
            Some(p) => vec![p],
            None => (0..self.components[0].mean.len()).collect(),
        };
        let weights: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        let means = self
            .components
            .iter()
            .flat_map(|c| dims.iter().map(|&k| c.mean[k]))
            .collect();
        let widths: Vec<f64> = self
            .components
            .iter()
            .flat_map(|c| dims.iter().map(|&k| c.width[k]))
            .collect();
        Ok(MixtureParams::from_weights(
            Scheme::SquaredNorm,
            dims.len(),
            &weights,
            means,
            &widths,
        )?)
    }
}
