//! Dataset-level segmentation metrics.
//!
//! * gIoU: mean of per-sample IoU.
//! * cIoU: total intersection pixels over total union pixels.
//! * ncIoU: cIoU after resizing every prediction / ground-truth pair to a
//!   common square size, so large images stop dominating the pixel totals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{ratio_or, resize_nearest, BinaryMask, MaskError};

pub const DEFAULT_NORM_SIZE: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no samples")]
    EmptyInput,
    #[error("normalization size must be at least 1")]
    InvalidSize,
    #[error("sample {image_id}: {source}")]
    Sample { image_id: String, source: MaskError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub image_id: String,
    pub prediction: BinaryMask,
    pub ground_truth: BinaryMask,
}

impl EvalSample {
    pub fn new(image_id: impl Into<String>, prediction: BinaryMask, ground_truth: BinaryMask) -> Result<Self, MetricsError> {
        let image_id = image_id.into();
        if prediction.dims() != ground_truth.dims() {
            let ((a, b), (c, d)) = (prediction.dims(), ground_truth.dims());
            return Err(MetricsError::Sample { image_id, source: MaskError::DimensionMismatch(a, b, c, d) });
        }
        Ok(EvalSample { image_id, prediction, ground_truth })
    }

    /// Integer (intersection, union) pixel counts.
    pub fn counts(&self) -> Result<(u64, u64), MetricsError> {
        self.prediction
            .overlap_counts(&self.ground_truth)
            .map_err(|source| MetricsError::Sample { image_id: self.image_id.clone(), source })
    }

    pub fn iou(&self) -> Result<f64, MetricsError> {
        let (i, u) = self.counts()?;
        Ok(ratio_or(i, u, 1.0))
    }

    fn resized(&self, size: usize) -> Result<(BinaryMask, BinaryMask), MetricsError> {
        let wrap = |source| MetricsError::Sample { image_id: self.image_id.clone(), source };
        Ok((
            resize_nearest(&self.prediction, size, size).map_err(wrap)?,
            resize_nearest(&self.ground_truth, size, size).map_err(wrap)?,
        ))
    }
}

fn non_empty(samples: &[EvalSample]) -> Result<(), MetricsError> {
    if samples.is_empty() {
        Err(MetricsError::EmptyInput)
    } else {
        Ok(())
    }
}

fn per_sample_counts(samples: &[EvalSample]) -> Result<Vec<(u64, u64)>, MetricsError> {
    samples.par_iter().map(EvalSample::counts).collect()
}

fn cumulative(counts: &[(u64, u64)]) -> f64 {
    let (inter, union) = counts.iter().fold((0u64, 0u64), |(a, b), (i, u)| (a + i, b + u));
    ratio_or(inter, union, 1.0)
}

fn mean_iou(counts: &[(u64, u64)]) -> f64 {
    counts.iter().map(|&(i, u)| ratio_or(i, u, 1.0)).sum::<f64>() / counts.len() as f64
}

pub fn giou(samples: &[EvalSample]) -> Result<f64, MetricsError> {
    non_empty(samples)?;
    Ok(mean_iou(&per_sample_counts(samples)?))
}

pub fn ciou(samples: &[EvalSample]) -> Result<f64, MetricsError> {
    non_empty(samples)?;
    Ok(cumulative(&per_sample_counts(samples)?))
}

/// Per-sample (intersection, union) after resizing both masks to `norm_size x norm_size`.
pub fn normalized_counts(samples: &[EvalSample], norm_size: usize) -> Result<Vec<(u64, u64)>, MetricsError> {
    if norm_size == 0 {
        return Err(MetricsError::InvalidSize);
    }
    samples
        .par_iter()
        .map(|s| {
            if s.prediction.dims() == (norm_size, norm_size) {
                return s.counts();
            }
            let (p, g) = s.resized(norm_size)?;
            p.overlap_counts(&g).map_err(|source| MetricsError::Sample { image_id: s.image_id.clone(), source })
        })
        .collect()
}

pub fn nciou(samples: &[EvalSample], norm_size: usize) -> Result<f64, MetricsError> {
    non_empty(samples)?;
    Ok(cumulative(&normalized_counts(samples, norm_size)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub image_id: String,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub giou: f64,
    pub ciou: f64,
    pub nciou: f64,
    pub norm_size: usize,
    pub n: usize,
    pub per_sample: Vec<SampleScore>,
}

/// All three metrics plus per-sample IoUs, ordered by image id.
pub fn build_report(samples: &[EvalSample], norm_size: usize) -> Result<MetricsReport, MetricsError> {
    non_empty(samples)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].image_id.cmp(&samples[b].image_id).then(a.cmp(&b)));
    let sorted: Vec<EvalSample> = order.iter().map(|&i| samples[i].clone()).collect();
    let counts = per_sample_counts(&sorted)?;
    let per_sample = sorted
        .iter()
        .zip(&counts)
        .map(|(s, &(i, u))| SampleScore { image_id: s.image_id.clone(), iou: ratio_or(i, u, 1.0) })
        .collect();
    Ok(MetricsReport {
        giou: mean_iou(&counts),
        ciou: cumulative(&counts),
        nciou: cumulative(&normalized_counts(&sorted, norm_size)?),
        norm_size,
        n: sorted.len(),
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A 1-row sample with the requested intersection and union counts.
    fn sample(id: &str, inter: usize, union: usize) -> EvalSample {
        let pred = BinaryMask::from_fn(1, union, |_, c| c < inter);
        let gt = BinaryMask::ones(1, union);
        EvalSample::new(id, pred, gt).unwrap()
    }

    #[test]
    fn giou_examples() {
        assert_eq!(giou(&[sample("a", 1, 2)]).unwrap(), 0.5);
        let m = BinaryMask::rect(4, 4, 0, 0, 2, 3);
        assert_eq!(giou(&[EvalSample::new("p", m.clone(), m).unwrap()]).unwrap(), 1.0);
        let g = giou(&[sample("a", 5, 10), sample("b", 9, 10)]).unwrap();
        assert!((g - 0.7).abs() < 1e-15);
        assert_eq!(giou(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn ciou_examples() {
        let s = sample("a", 3, 7);
        assert_eq!(ciou(std::slice::from_ref(&s)).unwrap(), s.iou().unwrap());
        let c = ciou(&[sample("a", 10, 20), sample("b", 90, 100)]).unwrap();
        assert_eq!(c, 100.0 / 120.0);
        let empty = EvalSample::new("e", BinaryMask::zeros(3, 3), BinaryMask::zeros(3, 3)).unwrap();
        assert_eq!(ciou(&[empty.clone(), empty]).unwrap(), 1.0);
    }

    #[test]
    fn nciou_examples() {
        let samples = [sample("a", 2, 8), sample("b", 8, 8)];
        // Already 1x8, normalising to 8 stretches rows but keeps ratios.
        let at_norm: Vec<EvalSample> = (0..2)
            .map(|i| {
                let p = BinaryMask::rect(8, 8, 0, 0, 8, 2 + 6 * i);
                EvalSample::new(format!("s{i}"), p, BinaryMask::ones(8, 8)).unwrap()
            })
            .collect();
        assert_eq!(nciou(&at_norm, 8).unwrap(), ciou(&at_norm).unwrap());
        let single = &samples[..1];
        assert_eq!(nciou(single, 8).unwrap(), 2.0 / 8.0);
        assert_eq!(nciou(&samples, 0), Err(MetricsError::InvalidSize));
    }

    #[test]
    fn mismatched_sample_rejected() {
        assert!(EvalSample::new("x", BinaryMask::zeros(2, 2), BinaryMask::zeros(2, 3)).is_err());
    }

    #[test]
    fn report_is_sorted_and_consistent() {
        let samples = vec![sample("b", 9, 10), sample("a", 5, 10)];
        let r = build_report(&samples, 16).unwrap();
        assert_eq!(r.per_sample[0].image_id, "a");
        assert_eq!(r.n, 2);
        assert_eq!(r.giou, giou(&samples).unwrap());
        assert_eq!(r.ciou, ciou(&samples).unwrap());
        assert_eq!(r.nciou, nciou(&samples, 16).unwrap());
        let json = serde_json::to_value(&r).unwrap();
        for key in ["giou", "ciou", "nciou", "norm_size", "n", "per_sample"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let m = BinaryMask::ones(4, 4);
        let perfect = build_report(&[EvalSample::new("p", m.clone(), m).unwrap()], 4).unwrap();
        assert_eq!((perfect.giou, perfect.ciou, perfect.nciou), (1.0, 1.0, 1.0));
    }
}
