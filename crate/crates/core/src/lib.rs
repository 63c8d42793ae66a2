//! Density fitting by minimizing the total bit count of model plus encoded data.
//!
//! The model is a diagonal-covariance Gaussian mixture viewed as a parametric
//! coordinate transform `u = F(x, m)` built from conditional CDFs. Its spatial
//! Jacobian is lower triangular with determinant equal to the mixture density,
//! and its parametric Jacobian measures how much room truncating a parameter
//! takes away from the encoded data. The objective
//!
//! ```text
//! Q = Q_l + Q_delta + Q_r
//! ```
//!
//! adds the parameter bit lengths (`Q_delta = -sum log dm_k`) and the volume
//! lost to parameter truncation (`Q_r`) to the negative log-likelihood `Q_l`.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, sample
//! generation and the command line tool live in the `bitfit` crate.
//!
//! Module map:
//! - [`mixture`]: amplitude parameterizations, log-density, the conditional-CDF
//!   encoder with analytic spatial and parametric Jacobians.
//! - [`bitcost`]: perturbation matrix, the three volume approximations, the
//!   regularizer and the full `Q` breakdown.
//! - [`optim`]: the staged minimizer, pruning, and truncation-range repair.
//! - [`uncertainty`]: Hessian-propagated parameter standard deviations.

#![no_std]

extern crate alloc;

pub mod bitcost;
mod error;
pub mod linalg;
pub mod math;
pub mod mixture;
pub mod optim;
pub mod uncertainty;

pub use bitcost::{
    perturbation_matrix, q_regularizer, q_total, q_total_with_precision, q_univariate, volume_first_order,
    volume_parallelotope, volume_per_parameter, DeltaM, PerturbationMatrix, QBreakdown, VariationMode,
};
pub use error::{Error, Result};
pub use mixture::{encode, jac_x_from_means, log_pdf, weights, Dataset, EncoderEval, MixtureParams, Scheme};
pub use optim::{
    best_delta_m, fit, numeric_gradient, prune, repair_delta_m, Bounds, FitConfig, FitObjective, FitResult, Gradient,
    Repair, StageReport,
};
pub use uncertainty::{estimate_errors, estimate_errors_with, ErrorEstimate, ErrorMethod, ErrorOptions};
