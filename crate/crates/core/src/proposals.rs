//! Everything-mode proposal postprocessing and ground-truth labeling.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{iop, iou, BinaryMask, MaskError};

pub const PROPOSAL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProposalError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("schema version {found} not supported (expected {expected})")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskProposal {
    pub mask: BinaryMask,
    pub predicted_iou: f64,
    /// Point prompt (row, col) that produced this mask upstream, when known.
    #[serde(rename = "point")]
    pub source_point: Option<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    pub image_id: String,
    pub image_h: usize,
    pub image_w: usize,
    pub proposals: Vec<MaskProposal>,
}

/// Ground-truth targets for one proposal set: IoU and IoP of every proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetVector {
    pub ious: Vec<f64>,
    pub iops: Vec<f64>,
}

/// Postprocessing knobs. The filter and NMS thresholds are not fixed by the
/// method; these defaults follow common everything-mode settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    pub iou_filter: f64,
    pub nms_threshold: f64,
    pub max_proposals: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig { iou_filter: 0.85, nms_threshold: 0.7, max_proposals: 64 }
    }
}

impl ProposalSet {
    pub fn new(image_id: impl Into<String>, image_h: usize, image_w: usize, proposals: Vec<MaskProposal>) -> Result<Self, MaskError> {
        for p in &proposals {
            if p.mask.dims() != (image_h, image_w) {
                let (h, w) = p.mask.dims();
                return Err(MaskError::DimensionMismatch(image_h, image_w, h, w));
            }
        }
        Ok(ProposalSet { image_id: image_id.into(), image_h, image_w, proposals })
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    fn with_proposals(&self, proposals: Vec<MaskProposal>) -> Self {
        ProposalSet { image_id: self.image_id.clone(), image_h: self.image_h, image_w: self.image_w, proposals }
    }
}

/// Keeps proposals whose predicted IoU is at least `threshold`, in order.
pub fn filter_by_predicted_iou(set: &ProposalSet, threshold: f64) -> ProposalSet {
    set.with_proposals(set.proposals.iter().filter(|p| p.predicted_iou >= threshold).cloned().collect())
}

/// Indices ordered by predicted IoU descending, ties by original index.
pub fn score_order(set: &ProposalSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| {
        set.proposals[b]
            .predicted_iou
            .total_cmp(&set.proposals[a].predicted_iou)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy mask-IoU NMS. Returns kept proposals in score order.
pub fn nms(set: &ProposalSet, iou_threshold: f64) -> ProposalSet {
    let order = score_order(set);
    let mut kept: Vec<usize> = Vec::new();
    for &cand in &order {
        let suppressed = kept.iter().any(|&k| {
            // Masks in a set share dimensions, so iou cannot fail here.
            iou(&set.proposals[k].mask, &set.proposals[cand].mask).unwrap_or(0.0) > iou_threshold
        });
        if !suppressed {
            kept.push(cand);
        }
    }
    set.with_proposals(kept.into_iter().map(|i| set.proposals[i].clone()).collect())
}

/// Filter, suppress duplicates, then cap the proposal count.
pub fn postprocess(set: &ProposalSet, cfg: &PostprocessConfig) -> ProposalSet {
    let mut out = nms(&filter_by_predicted_iou(set, cfg.iou_filter), cfg.nms_threshold);
    out.proposals.truncate(cfg.max_proposals);
    out
}

pub fn label_targets(set: &ProposalSet, gt: &BinaryMask) -> Result<TargetVector, MaskError> {
    let mut ious = Vec::with_capacity(set.len());
    let mut iops = Vec::with_capacity(set.len());
    for p in &set.proposals {
        ious.push(iou(&p.mask, gt)?);
        iops.push(iop(&p.mask, gt)?);
    }
    if set.is_empty() && gt.dims() != (set.image_h, set.image_w) {
        let (h, w) = gt.dims();
        return Err(MaskError::DimensionMismatch(set.image_h, set.image_w, h, w));
    }
    Ok(TargetVector { ious, iops })
}

#[derive(Serialize, Deserialize)]
struct ProposalFile {
    #[serde(default = "default_version")]
    version: u32,
    image_id: String,
    h: usize,
    w: usize,
    proposals: Vec<MaskProposal>,
}

fn default_version() -> u32 {
    PROPOSAL_SCHEMA_VERSION
}

pub fn proposal_set_to_json(set: &ProposalSet) -> String {
    let file = ProposalFile {
        version: PROPOSAL_SCHEMA_VERSION,
        image_id: set.image_id.clone(),
        h: set.image_h,
        w: set.image_w,
        proposals: set.proposals.clone(),
    };
    serde_json::to_string(&file).expect("proposal sets always serialize")
}

pub fn proposal_set_from_json(text: &str) -> Result<ProposalSet, ProposalError> {
    let file: ProposalFile = serde_json::from_str(text).map_err(|e| ProposalError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.version != PROPOSAL_SCHEMA_VERSION {
        return Err(ProposalError::SchemaVersionMismatch { expected: PROPOSAL_SCHEMA_VERSION, found: file.version });
    }
    for (i, p) in file.proposals.iter().enumerate() {
        if !(0.0..=1.0).contains(&p.predicted_iou) {
            return Err(ProposalError::Parse {
                offset: 0,
                message: format!("proposal {i}: predicted_iou {} outside [0,1]", p.predicted_iou),
            });
        }
    }
    Ok(ProposalSet::new(file.image_id, file.h, file.w, file.proposals)?)
}

pub fn load_proposal_set(path: impl AsRef<Path>) -> Result<ProposalSet, ProposalError> {
    proposal_set_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_proposal_set(set: &ProposalSet, path: impl AsRef<Path>) -> Result<(), ProposalError> {
    std::fs::write(path, proposal_set_to_json(set))?;
    Ok(())
}

/// Converts serde_json's 1-based (line, column) into a byte offset.
pub(crate) fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
