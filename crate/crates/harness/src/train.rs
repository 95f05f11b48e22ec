use std::io::Write;

use maskselect::model::{LossBreakdown, SelectionModel};
use maskselect::numerics::{adamw_step, OptimizerState, Tensor2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::synth::SyntheticSample;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub lr: f64,
    pub l_iou: f64,
    pub l_iop: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SelectionModel,
    pub log: Vec<LogEntry>,
}

/// Model inputs and targets precomputed once per sample.
struct Prepared {
    id: String,
    embeddings: Tensor2,
    seg: Vec<f64>,
    ious: Vec<f64>,
    iops: Vec<f64>,
}

fn prepare(samples: &[SyntheticSample], dim: usize) -> Result<Vec<Prepared>, HarnessError> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        if s.proposals.is_empty() {
            continue;
        }
        if s.seg.len() != dim || s.grid.channels() != dim {
            return Err(HarnessError::BadSample {
                sample: s.id.clone(),
                message: format!("feature dim {} / seg dim {} but model_dim {dim}", s.grid.channels(), s.seg.len()),
            });
        }
        let embeddings = s.embeddings()?;
        if !embeddings.is_finite() || s.seg.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::BadSample { sample: s.id.clone(), message: "non-finite features".into() });
        }
        out.push(Prepared {
            id: s.id.clone(),
            embeddings,
            seg: s.seg.clone(),
            ious: s.targets.ious.clone(),
            iops: s.targets.iops.clone(),
        });
    }
    if out.is_empty() {
        return Err(HarnessError::DataMissing("no sample with at least one proposal".into()));
    }
    Ok(out)
}

/// Endless epoch-shuffled sample order.
struct Sampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(n: usize, seed: u64) -> Self {
        Sampler { order: (0..n).collect(), cursor: n, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn next(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }
}

/// Trains a fresh model seeded by `cfg.seed`. Each update averages gradients
/// over `grad_accumulation * batch_size` samples; the log records the mean
/// losses of those samples and the learning rate applied.
pub fn train(cfg: &RunConfig, samples: &[SyntheticSample]) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let data = prepare(samples, cfg.model.model_dim)?;
    let mut model = SelectionModel::new(cfg.model.clone(), cfg.seed)?;
    let mut opt = OptimizerState::new(model.params(), cfg.optimizer, cfg.steps).map_err(maskselect::model::ModelError::from)?;
    let mut sampler = Sampler::new(data.len(), cfg.seed.wrapping_add(1));
    let micro = cfg.grad_accumulation * cfg.batch_size;
    let mut log = Vec::with_capacity(cfg.steps as usize);
    for step in 1..=cfg.steps {
        model.params_mut().zero_grads();
        let (mut l_iou, mut l_iop) = (0.0, 0.0);
        for _ in 0..micro {
            let s = &data[sampler.next()];
            let (loss, _) = model.loss_and_backward(&s.embeddings, &s.seg, &s.ious, &s.iops)?;
            if !loss.total.is_finite() {
                return Err(HarnessError::NonFiniteLoss { step, sample: s.id.clone(), l_iou: loss.l_iou, l_iop: loss.l_iop });
            }
            l_iou += loss.l_iou;
            l_iop += loss.l_iop;
        }
        model.params_mut().scale_grads(1.0 / micro as f64);
        let lr = adamw_step(model.params_mut(), &mut opt).map_err(maskselect::model::ModelError::from)?;
        let (l_iou, l_iop) = (l_iou / micro as f64, l_iop / micro as f64);
        let total = maskselect::model::total_loss(l_iou, l_iop, model.config());
        log.push(LogEntry { step, lr, l_iou, l_iop, total });
    }
    Ok(TrainOutcome { model, log })
}

pub fn write_log<W: Write>(mut w: W, log: &[LogEntry]) -> Result<(), HarnessError> {
    for e in log {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Mean total loss over the first and the last `window` log entries.
pub fn loss_drop(log: &[LogEntry], window: usize) -> Option<(f64, f64)> {
    if log.is_empty() || window == 0 {
        return None;
    }
    let w = window.min(log.len());
    let mean = |s: &[LogEntry]| s.iter().map(|e| e.total).sum::<f64>() / s.len() as f64;
    Some((mean(&log[..w]), mean(&log[log.len() - w..])))
}

/// Mean losses of `model` over `samples` without updating anything.
pub fn mean_loss(model: &SelectionModel, samples: &[SyntheticSample]) -> Result<LossBreakdown, HarnessError> {
    let data = prepare(samples, model.config().model_dim)?;
    let (mut a, mut b) = (0.0, 0.0);
    for s in &data {
        let l = model.loss(&s.embeddings, &s.seg, &s.ious, &s.iops)?;
        a += l.l_iou;
        b += l.l_iop;
    }
    let n = data.len() as f64;
    Ok(LossBreakdown { l_iou: a / n, l_iop: b / n, total: maskselect::model::total_loss(a / n, b / n, model.config()) })
}
