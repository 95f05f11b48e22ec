//! Proposal selection strategies and mask assembly.

use std::fmt;
use std::str::FromStr;

use super::{ModelError, SelectionOutput};
use crate::mask::BinaryMask;
use crate::proposals::ProposalSet;

/// Index of the largest value, lowest index on ties; `None` when empty.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// The single proposal most similar to the SEG token.
pub fn select_top1_iou(output: &SelectionOutput) -> Vec<usize> {
    argmax(&output.similarities).into_iter().collect()
}

/// Every proposal with predicted IoP strictly above `threshold`.
pub fn select_threshold_iop(output: &SelectionOutput, threshold: f64) -> Vec<usize> {
    (0..output.len()).filter(|&k| output.iop_predictions[k] > threshold).collect()
}

pub fn select_union_top1_threshold(output: &SelectionOutput, threshold: f64) -> Vec<usize> {
    let mut out = select_threshold_iop(output, threshold);
    for k in select_top1_iou(output) {
        if let Err(pos) = out.binary_search(&k) {
            out.insert(pos, k);
        }
    }
    out
}

/// Threshold rule restricted to the five highest-similarity proposals.
pub fn select_threshold_from_top5(output: &SelectionOutput, threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..output.len()).collect();
    order.sort_by(|&a, &b| output.similarities[b].total_cmp(&output.similarities[a]).then(a.cmp(&b)));
    order.truncate(5);
    let mut out: Vec<usize> = order.into_iter().filter(|&k| output.iop_predictions[k] > threshold).collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Top1Iou,
    ThresholdIop,
    Union,
    Top5Threshold,
    /// Oracle: the proposal with the highest ground-truth IoU.
    GtTop1,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Top1Iou, Strategy::ThresholdIop, Strategy::Union, Strategy::Top5Threshold, Strategy::GtTop1];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Top1Iou => "top1-iou",
            Strategy::ThresholdIop => "threshold-iop",
            Strategy::Union => "union",
            Strategy::Top5Threshold => "top5-threshold",
            Strategy::GtTop1 => "gt-top1",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownStrategy(pub String);

impl fmt::Display for UnknownStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
        write!(f, "unknown strategy {:?} (expected one of {})", self.0, names.join(", "))
    }
}

impl std::error::Error for UnknownStrategy {}

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

/// Applies `strategy`. `target_ious` is only consulted by the oracle strategy.
pub fn select(strategy: Strategy, output: &SelectionOutput, threshold: f64, target_ious: Option<&[f64]>) -> Result<Vec<usize>, ModelError> {
    Ok(match strategy {
        Strategy::Top1Iou => select_top1_iou(output),
        Strategy::ThresholdIop => select_threshold_iop(output, threshold),
        Strategy::Union => select_union_top1_threshold(output, threshold),
        Strategy::Top5Threshold => select_threshold_from_top5(output, threshold),
        Strategy::GtTop1 => {
            let t = target_ious.ok_or_else(|| ModelError::LengthMismatch("gt-top1 needs ground-truth IoUs".into()))?;
            if t.len() != output.len() {
                return Err(ModelError::LengthMismatch(format!("{} targets for {} proposals", t.len(), output.len())));
            }
            argmax(t).into_iter().collect()
        }
    })
}

/// Union of the selected proposal masks; all-zeros when nothing is selected.
pub fn predict_mask(set: &ProposalSet, selected: &[usize]) -> Result<BinaryMask, ModelError> {
    let mut out = BinaryMask::zeros(set.image_h, set.image_w);
    for &k in selected {
        let p = set.proposals.get(k).ok_or(ModelError::IndexOutOfRange { index: k, len: set.len() })?;
        out.or_assign(&p.mask)?;
    }
    Ok(out)
}
