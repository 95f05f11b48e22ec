//! AdamW with a linear warmup / linear decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamStore, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Peak learning rate reached at the end of warmup.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, warmup_steps: 100 }
    }
}

/// Linear ramp from 0 to `base_lr` over `warmup_steps`, then linear decay to 0
/// at `total_steps`.
pub fn warmup_decay_lr(step: u64, warmup_steps: u64, total_steps: u64, base_lr: f64) -> Result<f64, NumericsError> {
    if total_steps == 0 || warmup_steps > total_steps || step > total_steps {
        return Err(NumericsError::InvalidSchedule(format!(
            "step {step}, warmup {warmup_steps}, total {total_steps}"
        )));
    }
    if step < warmup_steps {
        return Ok(base_lr * (step as f64 / warmup_steps as f64));
    }
    if total_steps == warmup_steps {
        return Ok(base_lr);
    }
    Ok(base_lr * ((total_steps - step) as f64 / (total_steps - warmup_steps) as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub total_steps: u64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl OptimizerState {
    pub fn new(params: &ParamStore, config: OptimizerConfig, total_steps: u64) -> Result<Self, NumericsError> {
        warmup_decay_lr(0, config.warmup_steps, total_steps, config.lr)?;
        let zeros = |_| params.ids().map(|id| Tensor2::zeros(params.value(id).rows(), params.value(id).cols())).collect();
        Ok(OptimizerState { config, total_steps, first: zeros(0), second: zeros(1) })
    }

    /// Learning rate the next update will use.
    pub fn next_lr(&self, params: &ParamStore) -> Result<f64, NumericsError> {
        warmup_decay_lr(params.step() + 1, self.config.warmup_steps, self.total_steps, self.config.lr)
    }
}

/// One decoupled-weight-decay Adam update using the scheduled learning rate.
/// Returns the learning rate applied.
pub fn adamw_step(params: &mut ParamStore, opt: &mut OptimizerState) -> Result<f64, NumericsError> {
    if opt.first.len() != params.len() {
        return Err(NumericsError::DimensionMismatch(format!(
            "optimizer tracks {} parameters, store has {}",
            opt.first.len(),
            params.len()
        )));
    }
    if let Some(id) = params.ids().find(|&id| !params.has_grad(id)) {
        return Err(NumericsError::MissingGradient(params.name(id).to_string()));
    }
    let lr = opt.next_lr(params)?;
    let cfg = opt.config;
    let t = (params.step() + 1) as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let grad = params.grad(id).data().to_vec();
        let m = opt.first[id.index()].data_mut();
        let v = opt.second[id.index()].data_mut();
        let p = params.value_mut(id).data_mut();
        for i in 0..p.len() {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= lr * cfg.weight_decay * p[i];
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    params.advance_step();
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(p: f64, g: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor2::row_vector(&[p])).unwrap();
        s.accumulate_slice(id, &[g]).unwrap();
        s
    }

    fn constant(lr: f64, wd: f64) -> OptimizerConfig {
        OptimizerConfig { lr, weight_decay: wd, warmup_steps: 0, ..Default::default() }
    }

    #[test]
    fn zero_gradient_zero_decay_is_a_no_op() {
        let mut s = scalar_store(0.37, 0.0);
        let mut opt = OptimizerState::new(&s, constant(0.1, 0.0), 10).unwrap();
        adamw_step(&mut s, &mut opt).unwrap();
        assert_eq!(s.value(s.id("p").unwrap()).data(), &[0.37]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
        let mut s = scalar_store(1.0, 1.0);
        let mut opt = OptimizerState::new(&s, constant(0.1, 0.0), 1_000_000).unwrap();
        let lr = adamw_step(&mut s, &mut opt).unwrap();
        let p = s.value(s.id("p").unwrap()).data()[0];
        let expected = 1.0 - lr * 1.0 / (1.0 + 1e-8);
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.9).abs() < 1e-6);
    }

    #[test]
    fn decoupled_weight_decay_shrinks_by_lr_wd_p() {
        let mut s = scalar_store(2.0, 0.0);
        let mut opt = OptimizerState::new(&s, constant(0.1, 0.01), 1_000_000).unwrap();
        let lr = adamw_step(&mut s, &mut opt).unwrap();
        let p = s.value(s.id("p").unwrap()).data()[0];
        assert_eq!(p, 2.0 - lr * 0.01 * 2.0);
    }

    #[test]
    fn missing_gradient_is_reported() {
        let mut s = ParamStore::new();
        s.add("w", Tensor2::zeros(1, 1)).unwrap();
        let mut opt = OptimizerState::new(&s, constant(0.1, 0.0), 10).unwrap();
        assert!(matches!(adamw_step(&mut s, &mut opt), Err(NumericsError::MissingGradient(n)) if n == "w"));
    }

    #[test]
    fn bitwise_deterministic() {
        let run = || {
            let mut s = scalar_store(0.3, -0.7);
            let mut opt = OptimizerState::new(&s, OptimizerConfig { warmup_steps: 2, ..Default::default() }, 5).unwrap();
            for _ in 0..4 {
                adamw_step(&mut s, &mut opt).unwrap();
            }
            s.value(s.id("p").unwrap()).data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn schedule_shape() {
        assert_eq!(warmup_decay_lr(100, 100, 1000, 1e-4).unwrap(), 1e-4);
        assert_eq!(warmup_decay_lr(1000, 100, 1000, 1e-4).unwrap(), 0.0);
        assert_eq!(warmup_decay_lr(50, 100, 1000, 1e-4).unwrap(), 0.5e-4);
        assert_eq!(warmup_decay_lr(0, 100, 1000, 1e-4).unwrap(), 0.0);
        assert_eq!(warmup_decay_lr(550, 100, 1000, 1.0).unwrap(), 0.5);
        assert_eq!(warmup_decay_lr(0, 0, 10, 2.0).unwrap(), 2.0);
        assert!(warmup_decay_lr(11, 0, 10, 1.0).is_err());
        assert!(warmup_decay_lr(0, 20, 10, 1.0).is_err());
        assert!(warmup_decay_lr(0, 0, 0, 1.0).is_err());
    }
}
