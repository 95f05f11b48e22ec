//! The mask-selection network: a fusion module over `K` mask embeddings plus
//! one SEG token, an IoU head scoring proposals by similarity to the SEG token,
//! and an IoP head regressing each proposal's intersection over prediction.

mod check;
mod checkpoint;
mod config;
mod layers;
mod loss;
mod select;

pub use check::{gradient_check, BlockError, GradCheckReport, GRADCHECK_REL_STEP};
pub use checkpoint::{load_checkpoint, read_checkpoint, read_seg_token, save_checkpoint, write_checkpoint, write_seg_token};
pub use config::ModelConfig;
pub use loss::{loss_iop, loss_iou, total_loss, LossBreakdown};
pub use select::{
    predict_mask, select, select_threshold_from_top5, select_threshold_iop, select_top1_iou, select_union_top1_threshold,
    Strategy,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::binio::FormatError;
use crate::mask::MaskError;
use crate::numerics::{dot, sigmoid, NumericsError, ParamStore, Tensor2};
use layers::{FusionBlock, FusionBlockCache, Mlp, MlpCache};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("proposal set is empty")]
    EmptyProposalSet,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("index {index} out of range for {len} proposals")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("parse error: {0}")]
    Parse(FormatError),
    #[error("checkpoint version {found} not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<FormatError> for ModelError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Version { expected, found } => ModelError::VersionMismatch { expected, found },
            FormatError::Io(io) => ModelError::Io(io),
            other => ModelError::Parse(other),
        }
    }
}

/// Per-proposal scores from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutput {
    /// IoU-head similarity of each proposal to the SEG token.
    pub similarities: Vec<f64>,
    /// IoP-head predictions in (0, 1).
    pub iop_predictions: Vec<f64>,
}

impl SelectionOutput {
    pub fn empty() -> Self {
        SelectionOutput { similarities: Vec::new(), iop_predictions: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.similarities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.similarities.is_empty()
    }
}

/// Gradients of the loss with respect to the model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrads {
    pub embeddings: Tensor2,
    pub seg: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    blocks: Vec<FusionBlockCache>,
    updated_embeddings: Tensor2,
    updated_seg: Vec<f64>,
    iou_mlp: MlpCache,
    iou_projected: Tensor2,
    iop_mlp: MlpCache,
    iop_predictions: Vec<f64>,
}

impl ForwardCache {
    pub fn updated_embeddings(&self) -> &Tensor2 {
        &self.updated_embeddings
    }

    pub fn updated_seg(&self) -> &[f64] {
        &self.updated_seg
    }
}

#[derive(Debug, Clone)]
pub struct SelectionModel {
    config: ModelConfig,
    params: ParamStore,
    blocks: Vec<FusionBlock>,
    iou_head: Mlp,
    iop_head: Mlp,
}

impl SelectionModel {
    /// Fresh model with seeded fan-in-scaled uniform weights and zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = config.model_dim;
        let blocks = (0..config.fusion_blocks)
            .map(|i| FusionBlock::new(&mut params, &mut rng, &format!("fusion.{i}"), d, config.heads, config.fusion_hidden))
            .collect::<Result<Vec<_>, _>>()?;
        let iou_head = Mlp::new(&mut params, &mut rng, "iou_head", d, &config.iou_head_dims)?;
        let iop_head = Mlp::new(&mut params, &mut rng, "iop_head", d, &config.iop_head_dims)?;
        Ok(SelectionModel { config, params, blocks, iou_head, iop_head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_inputs(&self, embeddings: &Tensor2, seg: &[f64]) -> Result<(), ModelError> {
        let d = self.config.model_dim;
        if embeddings.rows() == 0 {
            return Err(ModelError::EmptyProposalSet);
        }
        if embeddings.cols() != d || seg.len() != d {
            return Err(ModelError::LengthMismatch(format!(
                "embeddings width {} and seg length {} must equal model_dim {d}",
                embeddings.cols(),
                seg.len()
            )));
        }
        if !embeddings.is_finite() || seg.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite.into());
        }
        Ok(())
    }

    /// Runs the fusion blocks over `[seg; embeddings]` and splits the result
    /// back into updated embeddings and the updated SEG token.
    pub fn fusion_forward(&self, embeddings: &Tensor2, seg: &[f64]) -> Result<(Tensor2, Vec<f64>), ModelError> {
        let (x, _) = self.run_fusion(embeddings, seg)?;
        Ok(split_seg(&x))
    }

    fn run_fusion(&self, embeddings: &Tensor2, seg: &[f64]) -> Result<(Tensor2, Vec<FusionBlockCache>), ModelError> {
        self.check_inputs(embeddings, seg)?;
        let mut x = Tensor2::vstack(&Tensor2::row_vector(seg), embeddings)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward(&self.params, &x)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, caches))
    }

    /// Similarity of each (head-projected) embedding to the SEG token.
    pub fn iou_head(&self, updated_embeddings: &Tensor2, updated_seg: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.iou_scores(updated_embeddings, updated_seg)?.0)
    }

    fn iou_scores(&self, emb: &Tensor2, seg: &[f64]) -> Result<(Vec<f64>, Tensor2, MlpCache), ModelError> {
        if seg.len() != self.config.model_dim {
            return Err(ModelError::LengthMismatch(format!("seg length {}", seg.len())));
        }
        let (projected, cache) = self.iou_head.forward(&self.params, emb)?;
        let sims = (0..projected.rows()).map(|k| dot(projected.row(k), seg)).collect();
        Ok((sims, projected, cache))
    }

    /// Predicted IoP of each embedding, squashed into (0, 1).
    pub fn iop_head(&self, updated_embeddings: &Tensor2) -> Result<Vec<f64>, ModelError> {
        Ok(self.iop_scores(updated_embeddings)?.0)
    }

    fn iop_scores(&self, emb: &Tensor2) -> Result<(Vec<f64>, MlpCache), ModelError> {
        let (logits, cache) = self.iop_head.forward(&self.params, emb)?;
        Ok((logits.data().iter().map(|&z| sigmoid(z)).collect(), cache))
    }

    pub fn forward(&self, embeddings: &Tensor2, seg: &[f64]) -> Result<(SelectionOutput, ForwardCache), ModelError> {
        let (x, blocks) = self.run_fusion(embeddings, seg)?;
        let (updated_embeddings, updated_seg) = split_seg(&x);
        let (similarities, iou_projected, iou_mlp) = self.iou_scores(&updated_embeddings, &updated_seg)?;
        let (iop_predictions, iop_mlp) = self.iop_scores(&updated_embeddings)?;
        let out = SelectionOutput { similarities, iop_predictions: iop_predictions.clone() };
        let cache = ForwardCache { blocks, updated_embeddings, updated_seg, iou_mlp, iou_projected, iop_mlp, iop_predictions };
        Ok((out, cache))
    }

    /// Scores for a proposal set; an empty set yields an empty output.
    pub fn predict(&self, embeddings: &Tensor2, seg: &[f64]) -> Result<SelectionOutput, ModelError> {
        if embeddings.rows() == 0 {
            return Ok(SelectionOutput::empty());
        }
        Ok(self.forward(embeddings, seg)?.0)
    }

    /// Backpropagates upstream gradients on similarities and IoP predictions.
    /// Parameter gradients are added to the store; input gradients returned.
    pub fn backward(&mut self, cache: &ForwardCache, dsimilarities: &[f64], diop: &[f64]) -> Result<InputGrads, ModelError> {
        let k = cache.updated_embeddings.rows();
        let d = self.config.model_dim;
        if dsimilarities.len() != k || diop.len() != k {
            return Err(ModelError::LengthMismatch(format!(
                "{} / {} upstream gradients for {k} proposals",
                dsimilarities.len(),
                diop.len()
            )));
        }
        // IoU head: sim_k = proj_k . seg'
        let dprojected = Tensor2::from_fn(k, d, |r, c| dsimilarities[r] * cache.updated_seg[c]);
        let mut dseg = vec![0.0; d];
        for (r, &ds) in dsimilarities.iter().enumerate() {
            for (acc, &p) in dseg.iter_mut().zip(cache.iou_projected.row(r)) {
                *acc += ds * p;
            }
        }
        let mut demb = self.iou_head.backward(&mut self.params, &cache.iou_mlp, &dprojected)?;
        // IoP head: p = sigmoid(z)
        let dlogits = Tensor2::from_fn(k, 1, |r, _| {
            let p = cache.iop_predictions[r];
            diop[r] * p * (1.0 - p)
        });
        demb.add_assign(&self.iop_head.backward(&mut self.params, &cache.iop_mlp, &dlogits)?)?;

        let mut dx = Tensor2::vstack(&Tensor2::row_vector(&dseg), &demb)?;
        for (block, bcache) in self.blocks.iter().zip(&cache.blocks).rev() {
            dx = block.backward(&mut self.params, bcache, &dx)?;
        }
        let (embeddings, seg) = split_seg(&dx);
        Ok(InputGrads { embeddings, seg })
    }

    /// Forward, both losses and the weighted total, then backward. Parameter
    /// gradients of the total loss are accumulated into the store.
    pub fn loss_and_backward(
        &mut self,
        embeddings: &Tensor2,
        seg: &[f64],
        target_ious: &[f64],
        target_iops: &[f64],
    ) -> Result<(LossBreakdown, InputGrads), ModelError> {
        let (out, cache) = self.forward(embeddings, seg)?;
        let (l_iou, dsim) = loss_iou(&out.similarities, target_ious, self.config.tau, self.config.kl_target_first)?;
        let (l_iop, diop) = loss_iop(&out.iop_predictions, target_iops)?;
        let total = total_loss(l_iou, l_iop, &self.config);
        let dsim: Vec<f64> = dsim.iter().map(|g| g * self.config.lambda_iou).collect();
        let diop: Vec<f64> = diop.iter().map(|g| g * self.config.lambda_iop).collect();
        let grads = self.backward(&cache, &dsim, &diop)?;
        Ok((LossBreakdown { l_iou, l_iop, total }, grads))
    }

    /// Forward-only total loss.
    pub fn loss(&self, embeddings: &Tensor2, seg: &[f64], target_ious: &[f64], target_iops: &[f64]) -> Result<LossBreakdown, ModelError> {
        let (out, _) = self.forward(embeddings, seg)?;
        let (l_iou, _) = loss_iou(&out.similarities, target_ious, self.config.tau, self.config.kl_target_first)?;
        let (l_iop, _) = loss_iop(&out.iop_predictions, target_iops)?;
        Ok(LossBreakdown { l_iou, l_iop, total: total_loss(l_iou, l_iop, &self.config) })
    }

    /// Rebuilds a model from a config and a loaded parameter table, checking
    /// names and shapes against a fresh model of the same config.
    pub(crate) fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        let template = SelectionModel::new(config.clone(), 0)?;
        if template.params.len() != params.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "config expects {} tensors, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for id in template.params.ids() {
            let name = template.params.name(id);
            let other = params
                .id(name)
                .ok_or_else(|| ModelError::ShapeMismatch(format!("missing tensor {name}")))?;
            if other != id || params.value(other).shape() != template.params.value(id).shape() {
                return Err(ModelError::ShapeMismatch(format!(
                    "tensor {name}: {:?} vs expected {:?}",
                    params.value(other).shape(),
                    template.params.value(id).shape()
                )));
            }
        }
        Ok(SelectionModel { params, ..template })
    }
}

fn split_seg(x: &Tensor2) -> (Tensor2, Vec<f64>) {
    (x.row_block(1, x.rows() - 1), x.row(0).to_vec())
}

#[cfg(test)]
mod tests;
