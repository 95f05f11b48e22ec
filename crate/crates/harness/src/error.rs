use maskselect::metrics::MetricsError;
use maskselect::model::ModelError;
use maskselect::proposals::ProposalError;
use maskselect::{FormatError, MaskError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training data missing: {0}")]
    DataMissing(String),
    #[error("non-finite loss at step {step} on sample {sample}: l_iou={l_iou}, l_iop={l_iop}")]
    NonFiniteLoss { step: u64, sample: String, l_iou: f64, l_iop: f64 },
    #[error("sample {sample}: {message}")]
    BadSample { sample: String, message: String },
    #[error("invalid PGM: {0}")]
    InvalidPgm(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Proposals(#[from] ProposalError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
