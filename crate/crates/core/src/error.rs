use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("all raw amplitudes are zero; the squared-norm weights are undefined")]
    DegenerateAmplitudes,

    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite or singular spatial Jacobian at data point {index}")]
    NonFiniteJacobian { index: usize },

    #[error("orthogonalized Jacobian column {column} vanishes")]
    DegenerateJacobian { column: usize },

    #[error("no valid model found within budget (best invalid q_l = {best_q_l}, q_delta = {best_q_delta})")]
    FitFailure { best_q_l: f64, best_q_delta: f64 },

    #[error("pruning would remove every component")]
    PruneAll,

    #[error("truncation ranges cannot be repaired: Q stays invalid at scale {scale:e}")]
    Irreparable { scale: f64 },
}
