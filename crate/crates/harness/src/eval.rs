use maskselect::metrics::{build_report, EvalSample, MetricsReport};
use maskselect::model::{predict_mask, select, SelectionModel, SelectionOutput, Strategy};
use maskselect::BinaryMask;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::synth::SyntheticSample;
use crate::HarnessError;

/// Selection made for one sample, as written to a prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub image_id: String,
    pub selected: Vec<usize>,
    pub iou_scores: Vec<f64>,
    pub iop_scores: Vec<f64>,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub strategy: String,
    pub threshold: f64,
    pub report: MetricsReport,
    pub predictions: Vec<SamplePrediction>,
}

fn predict_one(
    model: &SelectionModel,
    s: &SyntheticSample,
    strategy: Strategy,
    threshold: f64,
) -> Result<(EvalSample, SamplePrediction), HarnessError> {
    let (output, selected, mask) = if s.proposals.is_empty() {
        (SelectionOutput::empty(), Vec::new(), BinaryMask::zeros(s.gt.height(), s.gt.width()))
    } else {
        let output = model.predict(&s.embeddings()?, &s.seg)?;
        let selected = select(strategy, &output, threshold, Some(&s.targets.ious))?;
        let mask = predict_mask(&s.proposals, &selected)?;
        (output, selected, mask)
    };
    let sample = EvalSample::new(s.id.clone(), mask, s.gt.clone())?;
    let pred = SamplePrediction {
        image_id: s.id.clone(),
        selected,
        iou_scores: output.similarities,
        iop_scores: output.iop_predictions,
        iou: sample.iou()?,
    };
    Ok((sample, pred))
}

/// Runs the model on every sample, selects proposals with `strategy` and
/// scores the union of the selection against the ground truth. Samples
/// without proposals count as empty predictions.
pub fn evaluate(
    model: &SelectionModel,
    samples: &[SyntheticSample],
    strategy: Strategy,
    threshold: f64,
    norm_size: usize,
) -> Result<EvalOutcome, HarnessError> {
    let results: Vec<(EvalSample, SamplePrediction)> =
        samples.par_iter().map(|s| predict_one(model, s, strategy, threshold)).collect::<Result<_, _>>()?;
    let (evals, mut predictions): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = build_report(&evals, norm_size)?;
    predictions.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(EvalOutcome { strategy: strategy.name().to_string(), threshold, report, predictions })
}

/// gIoU reachable by choosing the best subset of proposals per sample, found
/// by exhaustive search when a sample has at most `max_exhaustive` proposals
/// and by greedy forward selection otherwise.
pub fn selection_ceiling(samples: &[SyntheticSample], max_exhaustive: usize) -> Result<f64, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::DataMissing("no samples".into()));
    }
    let best: Vec<f64> = samples
        .par_iter()
        .map(|s| best_subset_iou(s, max_exhaustive))
        .collect::<Result<_, _>>()?;
    Ok(best.iter().sum::<f64>() / best.len() as f64)
}

fn best_subset_iou(s: &SyntheticSample, max_exhaustive: usize) -> Result<f64, HarnessError> {
    let masks: Vec<&BinaryMask> = s.proposals.proposals.iter().map(|p| &p.mask).collect();
    let empty = BinaryMask::zeros(s.gt.height(), s.gt.width());
    let score = |m: &BinaryMask| EvalSample::new(s.id.clone(), m.clone(), s.gt.clone()).and_then(|e| e.iou());
    let mut best = score(&empty)?;
    let k = masks.len();
    if k <= max_exhaustive {
        for bits in 1u64..(1u64 << k) {
            let mut m = empty.clone();
            for (i, p) in masks.iter().enumerate() {
                if bits >> i & 1 == 1 {
                    m.or_assign(p)?;
                }
            }
            best = best.max(score(&m)?);
        }
        return Ok(best);
    }
    let mut current = empty;
    let mut used = vec![false; k];
    loop {
        let mut step: Option<(usize, f64, BinaryMask)> = None;
        for i in (0..k).filter(|&i| !used[i]) {
            let mut m = current.clone();
            m.or_assign(masks[i])?;
            let v = score(&m)?;
            if v > best && step.as_ref().is_none_or(|(_, b, _)| v > *b) {
                step = Some((i, v, m));
            }
        }
        match step {
            Some((i, v, m)) => {
                used[i] = true;
                best = v;
                current = m;
            }
            None => return Ok(best),
        }
    }
}
