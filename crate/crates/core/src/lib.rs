//! Mask-proposal selection for reasoning segmentation.
//!
//! A promptable segmenter proposes class-agnostic masks; this crate pools an
//! embedding for each proposal from an image feature grid, fuses the
//! embeddings with a segmentation-intent token, scores them with an IoU head
//! and an IoP head, and selects proposals whose union is the prediction.
//! Evaluation uses gIoU, cIoU and size-normalised cIoU.

pub mod binio;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod proposals;

pub use binio::FormatError;
pub use mask::{iop, iou, resize_nearest, union_masks, BinaryMask, FeatureGrid, MaskError};
