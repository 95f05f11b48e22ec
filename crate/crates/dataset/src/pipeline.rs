//! Stage drivers: describe and build prompts, then generate, parse, assemble
//! and split.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::manifest::{assemble_record, assign_splits, ManifestRecord, SplitRatios};
use crate::prompt::{build_question_prompt, PromptBundle};
use crate::provider::{map_concurrent, CallOptions, DescribeRequest, Provider, QuestionRequest};
use crate::record::SourceRecord;
use crate::response::parse_question_response;
use crate::sample::{Selection, StratumCounts};
use crate::DatasetError;

/// Pipeline settings; field names match the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub corpus: Option<PathBuf>,
    pub counts: StratumCounts,
    pub seed: u64,
    pub provider: String,
    /// Question template file; the shipped template when absent.
    pub template: Option<PathBuf>,
    pub calls: CallOptions,
    pub ratios: SplitRatios,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            corpus: None,
            counts: StratumCounts::default(),
            seed: 0,
            provider: "mock:0".into(),
            template: None,
            calls: CallOptions::default(),
            ratios: SplitRatios::default(),
        }
    }
}

impl DatasetConfig {
    pub fn bundle(&self) -> Result<PromptBundle, DatasetError> {
        match &self.template {
            Some(p) => PromptBundle::from_file(p),
            None => Ok(PromptBundle::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub image_id: String,
    pub describer_prompt: String,
    pub summary: String,
    pub objects: Vec<String>,
    pub question_prompt: String,
}

/// Records of `corpus` named in `selection`, strata in order.
pub fn selected_records(corpus: &[SourceRecord], selection: &Selection) -> Vec<SourceRecord> {
    let by_id: HashMap<&str, &SourceRecord> = corpus.iter().map(|r| (r.image_id.as_str(), r)).collect();
    selection.all().filter_map(|id| by_id.get(id.as_str()).map(|r| (*r).clone())).collect()
}

/// Describes every record and fills the question template. Output ordered by
/// image id.
pub fn build_prompts(
    provider: &dyn Provider,
    records: &[SourceRecord],
    bundle: &PromptBundle,
    calls: CallOptions,
) -> Result<Vec<PromptRecord>, DatasetError> {
    let results = map_concurrent(records, calls, |r| {
        let summary = provider.describe_image(&DescribeRequest { image_id: &r.image_id, prompt: &bundle.describer_prompt })?;
        let objects = r.category_names();
        let question_prompt = build_question_prompt(&summary, &objects, bundle)?;
        Ok(PromptRecord {
            image_id: r.image_id.clone(),
            describer_prompt: bundle.describer_prompt.clone(),
            summary,
            objects,
            question_prompt,
        })
    })?;
    let mut out = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestOutput {
    pub records: Vec<ManifestRecord>,
    pub diagnostics: Vec<String>,
}

/// Generates questions for each prompt, parses and assembles them, then
/// assigns splits. Replies that never parse (after retries) and records with
/// no valid pairs are dropped and reported; provider failures abort.
pub fn build_manifest(
    provider: &dyn Provider,
    records: &[SourceRecord],
    prompts: &[PromptRecord],
    calls: CallOptions,
    ratios: SplitRatios,
    seed: u64,
) -> Result<ManifestOutput, DatasetError> {
    let by_id: HashMap<&str, &SourceRecord> = records.iter().map(|r| (r.image_id.as_str(), r)).collect();
    let mut prompts: Vec<&PromptRecord> = prompts.iter().collect();
    prompts.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    for p in &prompts {
        if !by_id.contains_key(p.image_id.as_str()) {
            return Err(DatasetError::InvalidRecord(format!("prompt for unknown image {}", p.image_id)));
        }
    }
    let results = map_concurrent(&prompts, calls, |p| {
        let source = by_id[p.image_id.as_str()];
        let text = provider.generate_questions(&QuestionRequest { image_id: &p.image_id, prompt: &p.question_prompt, objects: &p.objects })?;
        parse_question_response(&text, &source.category_names())
    })?;

    let mut assembled = Vec::new();
    let mut diagnostics = Vec::new();
    for (p, result) in prompts.iter().zip(results) {
        let parsed = match result {
            Ok(parsed) => parsed,
            Err(DatasetError::NoQuestionsFound(d)) => {
                diagnostics.push(format!("{}: dropped, reply had no questions", p.image_id));
                diagnostics.extend(d.into_iter().map(|m| format!("{}: {m}", p.image_id)));
                continue;
            }
            Err(e) => return Err(e),
        };
        diagnostics.extend(parsed.diagnostics.iter().map(|m| format!("{}: {m}", p.image_id)));
        match assemble_record(by_id[p.image_id.as_str()], &parsed.questions) {
            Ok((rec, d)) => {
                diagnostics.extend(d);
                assembled.push(rec);
            }
            Err(DatasetError::NoValidPairs(id)) => diagnostics.push(format!("{id}: dropped, no valid pairs")),
            Err(e) => return Err(e),
        }
    }
    Ok(ManifestOutput { records: assign_splits(assembled, ratios, seed)?, diagnostics })
}
