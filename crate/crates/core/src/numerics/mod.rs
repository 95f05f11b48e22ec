//! Small dense kernels in double precision, each with a hand-written backward
//! pass, plus the optimizer and the finite-difference oracle used to verify them.

mod attention;
pub mod gradcheck;
mod ops;
mod optim;
mod params;
mod tensor;

pub use attention::{multi_head_attention, multi_head_attention_backward, AttentionCache, AttentionGrads, AttentionWeights};
pub use gradcheck::{finite_diff_grad, finite_diff_grad_scaled, max_relative_error, relative_error};
pub use ops::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear_backward, linear_forward, sigmoid, softmax_temp,
    softmax_temp_backward, LayerNormCache, LayerNormGrads, LinearGrads, LAYER_NORM_EPS,
};
pub use optim::{adamw_step, warmup_decay_lr, OptimizerConfig, OptimizerState};
pub use params::{ParamId, ParamStore};
pub use tensor::{dot, Tensor2};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value")]
    NonFinite,
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("model dim {dim} not divisible by {heads} heads")]
    InvalidHeadCount { dim: usize, heads: usize },
    #[error("no gradient accumulated for parameter {0}")]
    MissingGradient(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParameter(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("function evaluation not finite at coordinate {index}")]
    NonFiniteEvaluation { index: usize },
}
