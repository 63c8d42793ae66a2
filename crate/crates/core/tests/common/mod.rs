#![allow(dead_code)]

use bitfit_core::{Dataset, MixtureParams, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random mixture with weights bounded away from zero and moderate widths.
pub fn random_params(rng: &mut ChaCha8Rng, scheme: Scheme, k: usize, d: usize) -> MixtureParams {
    let mut w: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let means = (0..k * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let widths: Vec<f64> = (0..k * d).map(|_| rng.random_range(0.4..2.0)).collect();
    MixtureParams::from_weights(scheme, d, &w, means, &widths).unwrap()
}

/// One draw from the mixture.
pub fn draw(rng: &mut ChaCha8Rng, p: &MixtureParams) -> Vec<f64> {
    let w = p.weights().unwrap();
    let mut u: f64 = rng.random();
    let mut comp = w.len() - 1;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            comp = i;
            break;
        }
        u -= wi;
    }
    (0..p.n_dim)
        .map(|nu| {
            let z: f64 = StandardNormal.sample(rng);
            p.mean(comp, nu) + p.width(comp, nu) * z
        })
        .collect()
}

pub fn sample(rng: &mut ChaCha8Rng, p: &MixtureParams, n: usize) -> Dataset {
    let pts: Vec<f64> = (0..n).flat_map(|_| draw(rng, p)).collect();
    Dataset::new(pts, p.n_dim).unwrap()
}

pub fn normal_sample(n: usize, mean: f64, sd: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let pts = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            mean + sd * z
        })
        .collect();
    Dataset::new(pts, 1).unwrap()
}

/// Mixture density written out directly.
pub fn pdf_oracle(x: &[f64], p: &MixtureParams) -> f64 {
    let w = p.weights().unwrap();
    w.iter()
        .enumerate()
        .map(|(i, wi)| {
            let mut v = *wi;
            for (nu, xv) in x.iter().enumerate() {
                let s = p.width(i, nu);
                let z = (xv - p.mean(i, nu)) / s;
                v *= (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
            }
            v
        })
        .sum()
}

pub fn schemes() -> [Scheme; 2] {
    [Scheme::SquaredNorm, Scheme::Hyperspherical]
}
