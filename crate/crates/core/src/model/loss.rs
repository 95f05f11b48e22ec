use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};
use crate::numerics::{softmax_temp, NumericsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_iou: f64,
    pub l_iop: f64,
    pub total: f64,
}

fn log_softmax(z: &[f64], tau: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|&v| ((v - max) / tau).exp()).sum::<f64>().ln();
    z.iter().map(|&v| (v - max) / tau - lse).collect()
}

/// KL divergence between the temperature softmax of the similarities and of
/// the ground-truth IoUs. With `target_first == false` this is
/// `KL(softmax(s/τ) || softmax(I/τ))`. Returns the loss and its gradient with
/// respect to the similarities.
pub fn loss_iou(similarities: &[f64], target_ious: &[f64], tau: f64, target_first: bool) -> Result<(f64, Vec<f64>), ModelError> {
    if similarities.len() != target_ious.len() || similarities.is_empty() {
        return Err(ModelError::LengthMismatch(format!(
            "{} similarities vs {} targets",
            similarities.len(),
            target_ious.len()
        )));
    }
    let p = softmax_temp(similarities, tau)?;
    let log_p = log_softmax(similarities, tau);
    let log_q = log_softmax(target_ious, tau);
    if !target_first {
        let terms: Vec<f64> = log_p.iter().zip(&log_q).map(|(lp, lq)| lp - lq).collect();
        let loss: f64 = p.iter().zip(&terms).map(|(pi, t)| pi * t).sum();
        // dL/dp_i = log p_i - log q_i + 1, then through the softmax; the +1 drops out.
        let inner: f64 = p.iter().zip(&terms).map(|(pi, t)| pi * t).sum();
        let grad = p.iter().zip(&terms).map(|(pi, t)| pi * (t - inner) / tau).collect();
        Ok((loss.max(0.0), grad))
    } else {
        let q: Vec<f64> = log_q.iter().map(|v| v.exp()).collect();
        let loss: f64 = q.iter().zip(log_q.iter().zip(&log_p)).map(|(qi, (lq, lp))| qi * (lq - lp)).sum();
        let grad = p.iter().zip(&q).map(|(pi, qi)| (pi - qi) / tau).collect();
        Ok((loss.max(0.0), grad))
    }
}

/// Weighted L2: `mean_k exp(g_k - 1) * (p_k - g_k)^2`. Returns the loss and its
/// gradient with respect to the predictions.
pub fn loss_iop(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>), ModelError> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(ModelError::LengthMismatch(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(NumericsError::DimensionMismatch("IoP targets must lie in [0,1]".into()).into());
    }
    let k = predictions.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predictions.len());
    for (&p, &g) in predictions.iter().zip(targets) {
        let w = (g - 1.0).exp();
        loss += w * (p - g) * (p - g);
        grad.push(2.0 * w * (p - g) / k);
    }
    Ok((loss / k, grad))
}

pub fn total_loss(l_iou: f64, l_iop: f64, config: &ModelConfig) -> f64 {
    config.lambda_iou * l_iou + config.lambda_iop * l_iop
}
