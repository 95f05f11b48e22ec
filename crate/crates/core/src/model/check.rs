//! Finite-difference verification of the full model backward pass.

use serde::Serialize;

use super::{ModelError, SelectionModel};
use crate::numerics::{finite_diff_grad_scaled, max_relative_error, ParamStore, Tensor2};

/// Per-coordinate step used by [`gradient_check`], relative to `max(1, |x|)`.
pub const GRADCHECK_REL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    /// Parameter name, or `input.embeddings` / `input.seg`.
    pub name: String,
    pub scalars: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_relative_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.blocks.iter().all(|b| b.max_relative_error <= tolerance)
    }

    pub fn worst(&self) -> Option<&BlockError> {
        self.blocks.iter().max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
    }
}

/// Compares the analytic gradient of the total loss against central finite
/// differences for every parameter tensor and both inputs.
///
/// `tamper` runs on the parameter store after the analytic backward pass and
/// before comparison; pass `|_| {}` for a normal check.
pub fn gradient_check(
    model: &SelectionModel,
    embeddings: &Tensor2,
    seg: &[f64],
    target_ious: &[f64],
    target_iops: &[f64],
    tamper: impl FnOnce(&mut ParamStore),
) -> Result<GradCheckReport, ModelError> {
    let mut analytic = model.clone();
    analytic.params_mut().zero_grads();
    let (_, input_grads) = analytic.loss_and_backward(embeddings, seg, target_ious, target_iops)?;
    tamper(analytic.params_mut());

    let mut probe = model.clone();
    let mut blocks = Vec::new();
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let base = model.params().value(id).data().to_vec();
        let numeric = finite_diff_grad_scaled(
            |x| {
                probe.params_mut().value_mut(id).data_mut().copy_from_slice(x);
                probe.loss(embeddings, seg, target_ious, target_iops).map(|l| l.total).unwrap_or(f64::NAN)
            },
            &base,
            GRADCHECK_REL_STEP,
        )?;
        probe.params_mut().value_mut(id).data_mut().copy_from_slice(&base);
        blocks.push(BlockError {
            name: model.params().name(id).to_string(),
            scalars: base.len(),
            max_relative_error: max_relative_error(analytic.params().grad(id).data(), &numeric),
        });
    }

    let (rows, cols) = embeddings.shape();
    let numeric_emb = finite_diff_grad_scaled(
        |x| {
            let e = Tensor2::new(rows, cols, x.to_vec()).expect("shape preserved");
            model.loss(&e, seg, target_ious, target_iops).map(|l| l.total).unwrap_or(f64::NAN)
        },
        embeddings.data(),
        GRADCHECK_REL_STEP,
    )?;
    blocks.push(BlockError {
        name: "input.embeddings".into(),
        scalars: numeric_emb.len(),
        max_relative_error: max_relative_error(input_grads.embeddings.data(), &numeric_emb),
    });
    let numeric_seg = finite_diff_grad_scaled(
        |x| model.loss(embeddings, x, target_ious, target_iops).map(|l| l.total).unwrap_or(f64::NAN),
        seg,
        GRADCHECK_REL_STEP,
    )?;
    blocks.push(BlockError {
        name: "input.seg".into(),
        scalars: seg.len(),
        max_relative_error: max_relative_error(&input_grads.seg, &numeric_seg),
    });
    Ok(GradCheckReport { blocks })
}
