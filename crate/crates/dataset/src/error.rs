use maskselect::MaskError;
use thiserror::Error;

use crate::sample::StratumDeficit;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("corpus too small: {}", format_deficits(.0))]
    CorpusTooSmall(Vec<StratumDeficit>),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("object list is empty")]
    EmptyObjects,
    #[error("no questions found in response ({} diagnostics)", .0.len())]
    NoQuestionsFound(Vec<String>),
    #[error("record {0} has no valid question/mask pairs")]
    NoValidPairs(String),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_deficits(d: &[StratumDeficit]) -> String {
    d.iter()
        .map(|x| format!("{} needs {} more (requested {}, available {})", x.stratum, x.requested - x.available, x.requested, x.available))
        .collect::<Vec<_>>()
        .join("; ")
}
