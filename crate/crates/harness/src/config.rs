use std::path::PathBuf;

use maskselect::model::ModelConfig;
use maskselect::numerics::OptimizerConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::HarnessError;

/// Training and evaluation settings. JSON field names match the struct
/// fields; nested `model` and `optimizer` objects follow `ModelConfig` and
/// `OptimizerConfig`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    /// Optimizer updates.
    pub steps: u64,
    /// Micro-batches whose gradients are averaged into one update.
    pub grad_accumulation: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            steps: 5000,
            grad_accumulation: 10,
            batch_size: 1,
            seed: 0,
            train_data: None,
            eval_data: None,
            checkpoint: None,
            report: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full-width model, 5000 updates.
    Full,
    /// 32-wide model, 2000 updates.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(format!("unknown preset {other:?} (expected full or desk)")),
        }
    }
}

impl RunConfig {
    pub fn desk() -> Self {
        RunConfig {
            model: ModelConfig::desk(),
            optimizer: OptimizerConfig { lr: DESK_LR, ..OptimizerConfig::default() },
            steps: 2000,
            ..Self::default()
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Full => Self::default(),
            Preset::Desk => Self::desk(),
        }
    }

    /// Overlays a JSON object on a preset. Nested objects merge key by key,
    /// so `{"model": {"tau": 0.2}}` changes only the temperature.
    pub fn from_json_over(preset: Preset, text: &str) -> Result<Self, HarnessError> {
        let mut base = serde_json::to_value(Self::preset(preset))?;
        let overlay: Value = serde_json::from_str(text)?;
        if !overlay.is_object() {
            return Err(HarnessError::InvalidConfig("config must be a JSON object".into()));
        }
        merge(&mut base, overlay);
        let cfg: RunConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model.validate()?;
        if self.steps == 0 || self.grad_accumulation == 0 || self.batch_size == 0 {
            return Err(HarnessError::InvalidConfig("steps, grad_accumulation and batch_size must be at least 1".into()));
        }
        if self.optimizer.warmup_steps > self.steps {
            return Err(HarnessError::InvalidConfig(format!(
                "warmup_steps {} exceeds steps {}",
                self.optimizer.warmup_steps, self.steps
            )));
        }
        let o = &self.optimizer;
        if !(o.lr >= 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) || !(o.weight_decay >= 0.0) {
            return Err(HarnessError::InvalidConfig(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

/// Peak learning rate of the desk preset.
pub const DESK_LR: f64 = 1e-3;

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
