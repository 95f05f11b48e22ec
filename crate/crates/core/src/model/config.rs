use serde::{Deserialize, Serialize};

use super::ModelError;

/// Hyperparameters of the fusion module and the two selection heads.
///
/// `Default` is the full-size configuration (256-dim features, IoP head
/// `[256, 64, 1]`, loss weights 1.0 / 50.0); [`ModelConfig::desk`] is the
/// reduced configuration used for synthetic training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub model_dim: usize,
    pub fusion_blocks: usize,
    pub heads: usize,
    pub fusion_hidden: usize,
    /// Layer widths of the IoU head MLP; the last must equal `model_dim` so the
    /// output can be dotted with the SEG token.
    pub iou_head_dims: Vec<usize>,
    /// Layer widths of the IoP head MLP; the last must be 1.
    pub iop_head_dims: Vec<usize>,
    /// Softmax temperature of the IoU loss.
    pub tau: f64,
    pub lambda_iou: f64,
    pub lambda_iop: f64,
    /// Default threshold for IoP-based selection.
    pub iop_threshold: f64,
    /// Compute the IoU loss as KL(target || prediction) instead of
    /// KL(prediction || target).
    pub kl_target_first: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model_dim: 256,
            fusion_blocks: 2,
            heads: 8,
            fusion_hidden: 512,
            iou_head_dims: vec![256, 256, 256],
            iop_head_dims: vec![256, 64, 1],
            tau: 0.1,
            lambda_iou: 1.0,
            lambda_iop: 50.0,
            iop_threshold: 0.5,
            kl_target_first: false,
        }
    }
}

impl ModelConfig {
    /// Reduced configuration for desk-scale training.
    pub fn desk() -> Self {
        Self::scaled(32, 4)
    }

    /// Same layout as the default at width `dim`: fusion MLP 2x wide, IoU head
    /// `[dim, dim, dim]`, IoP head `[dim, dim/4, 1]`.
    pub fn scaled(dim: usize, heads: usize) -> Self {
        ModelConfig {
            model_dim: dim,
            heads,
            fusion_hidden: 2 * dim,
            iou_head_dims: vec![dim, dim, dim],
            iop_head_dims: vec![dim, (dim / 4).max(1), 1],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::InvalidConfig(m));
        if self.model_dim == 0 || self.heads == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return fail(format!("model_dim {} not divisible by heads {}", self.model_dim, self.heads));
        }
        if self.fusion_hidden == 0 {
            return fail("fusion_hidden must be positive".into());
        }
        if self.iou_head_dims.last() != Some(&self.model_dim) || self.iou_head_dims.contains(&0) {
            return fail(format!("iou_head_dims {:?} must end in model_dim {}", self.iou_head_dims, self.model_dim));
        }
        if self.iop_head_dims.last() != Some(&1) || self.iop_head_dims.contains(&0) {
            return fail(format!("iop_head_dims {:?} must end in 1", self.iop_head_dims));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return fail(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.lambda_iou >= 0.0) || !(self.lambda_iop >= 0.0) {
            return fail("loss weights must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.iop_threshold) {
            return fail(format!("iop_threshold {} outside [0,1]", self.iop_threshold));
        }
        Ok(())
    }
}
