//! Instruction-data pipeline for reasoning segmentation: classify and sample
//! annotated images, prompt a describer and a question writer, parse the
//! replies, turn each question into a union-of-instances answer mask, and
//! split the result into a JSON-lines manifest.

mod error;
#[cfg(feature = "http")]
pub mod http;
pub mod manifest;
pub mod pipeline;
pub mod prompt;
pub mod provider;
pub mod record;
pub mod response;
pub mod sample;
pub mod synth;

pub use error::DatasetError;
pub use manifest::{
    assemble_record, assign_splits, dataset_stats, AssembledRecord, DatasetStats, ManifestRecord, QaPair, Split, SplitRatios,
};
pub use pipeline::{build_manifest, build_prompts, selected_records, DatasetConfig, ManifestOutput, PromptRecord};
pub use prompt::{build_describer_prompt, build_question_prompt, PromptBundle};
pub use provider::{provider_from_spec, CallOptions, MockProvider, Provider};
pub use record::{classify_complexity, read_corpus, read_jsonl, write_jsonl, Category, Complexity, SourceKind, SourceRecord};
pub use response::{parse_question_response, ParsedQuestion, ParsedResponse};
pub use sample::{stratified_sample, Selection, Stratum, StratumCounts};
pub use synth::{synth_corpus, CorpusConfig};
