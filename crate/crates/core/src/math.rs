//! Scalar helpers that work without `std`.

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `log(sum(exp(v)))`, expanded around the largest term.
///
/// Returns `-inf` for an empty slice or when every term is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-density of the standard normal at `z`.
#[inline]
pub fn log_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Lower and upper tail probabilities `(Phi(z), 1 - Phi(z))`.
///
/// Both are computed from `erfc` so the small one keeps full relative precision.
#[inline]
pub fn std_normal_tails(z: f64) -> (f64, f64) {
    let s = z * core::f64::consts::FRAC_1_SQRT_2;
    (0.5 * libm::erfc(-s), 0.5 * libm::erfc(s))
}

#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    std_normal_tails(z).0
}
