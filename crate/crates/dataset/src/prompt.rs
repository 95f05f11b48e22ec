use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::DatasetError;

pub const SUMMARY_PLACEHOLDER: &str = "<summary>";
pub const OBJECTS_PLACEHOLDER: &str = "<important_objects>";

const DESCRIBER_PROMPT: &str = "Please describe the content in this image within 10 sentences.";
const DEFAULT_TEMPLATE: &str = include_str!("../templates/question_prompt.txt");

pub fn build_describer_prompt() -> &'static str {
    DESCRIBER_PROMPT
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub describer_prompt: String,
    pub question_template: String,
}

impl PromptBundle {
    pub fn new(question_template: impl Into<String>) -> Result<Self, DatasetError> {
        let question_template = question_template.into();
        validate_template(&question_template)?;
        Ok(PromptBundle { describer_prompt: DESCRIBER_PROMPT.to_string(), question_template })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::new(std::fs::read_to_string(path)?)
    }
}

impl Default for PromptBundle {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("shipped template is valid")
    }
}

fn validate_template(t: &str) -> Result<(), DatasetError> {
    for p in [SUMMARY_PLACEHOLDER, OBJECTS_PLACEHOLDER] {
        let n = t.matches(p).count();
        if n != 1 {
            return Err(DatasetError::InvalidTemplate(format!("{p} occurs {n} times, expected once")));
        }
    }
    Ok(())
}

/// Substitutes the summary and the comma-joined objects into the template in
/// a single pass, so placeholder text inside the substitutions stays literal.
pub fn build_question_prompt(summary: &str, objects: &[String], bundle: &PromptBundle) -> Result<String, DatasetError> {
    if objects.is_empty() {
        return Err(DatasetError::EmptyObjects);
    }
    let t = &bundle.question_template;
    validate_template(t)?;
    let joined = objects.join(", ");
    let s = t.find(SUMMARY_PLACEHOLDER).expect("validated");
    let o = t.find(OBJECTS_PLACEHOLDER).expect("validated");
    let mut parts = [(s, SUMMARY_PLACEHOLDER.len(), summary), (o, OBJECTS_PLACEHOLDER.len(), joined.as_str())];
    parts.sort_by_key(|p| p.0);
    let mut out = String::with_capacity(t.len() + summary.len() + joined.len());
    let mut cursor = 0;
    for (at, len, text) in parts {
        out.push_str(&t[cursor..at]);
        out.push_str(text);
        cursor = at + len;
    }
    out.push_str(&t[cursor..]);
    Ok(out)
}
