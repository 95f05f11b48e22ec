//! Parser for question-generation replies.
//!
//! Each useful line has the form `N. question || cat1; cat2`. Other lines are
//! skipped and reported, so a partly malformed reply still yields its good
//! items.

use serde::{Deserialize, Serialize};

use crate::DatasetError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedQuestion {
    pub question: String,
    /// Names matched against the known categories, in their canonical spelling.
    pub categories: Vec<String>,
    /// Names that matched nothing.
    pub unresolved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub questions: Vec<ParsedQuestion>,
    pub diagnostics: Vec<String>,
}

fn strip_item_number(line: &str) -> Option<&str> {
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')).map(str::trim_start)
}

fn resolve<'a>(name: &str, known: &'a [String]) -> Option<&'a String> {
    known.iter().find(|k| k.trim().eq_ignore_ascii_case(name))
}

pub fn parse_question_response(response: &str, known_categories: &[String]) -> Result<ParsedResponse, DatasetError> {
    let mut questions = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, raw) in response.lines().enumerate() {
        let line = raw.trim();
        let n = i + 1;
        if line.is_empty() {
            continue;
        }
        let Some(body) = strip_item_number(line) else {
            diagnostics.push(format!("line {n}: skipped, not a numbered item"));
            continue;
        };
        let Some((q, cats)) = body.split_once("||") else {
            diagnostics.push(format!("line {n}: skipped, missing '||' separator"));
            continue;
        };
        let question = q.trim();
        if question.is_empty() {
            diagnostics.push(format!("line {n}: skipped, empty question"));
            continue;
        }
        let names: Vec<&str> = cats.split(';').map(str::trim).filter(|c| !c.is_empty()).collect();
        if names.is_empty() {
            diagnostics.push(format!("line {n}: skipped, no target categories"));
            continue;
        }
        let mut categories: Vec<String> = Vec::new();
        let mut unresolved = Vec::new();
        for name in names {
            match resolve(name, known_categories) {
                Some(k) if !categories.contains(k) => categories.push(k.clone()),
                Some(_) => {}
                None => {
                    diagnostics.push(format!("line {n}: unresolved category {name:?}"));
                    unresolved.push(name.to_string());
                }
            }
        }
        questions.push(ParsedQuestion { question: question.to_string(), categories, unresolved });
    }
    if questions.is_empty() {
        return Err(DatasetError::NoQuestionsFound(diagnostics));
    }
    Ok(ParsedResponse { questions, diagnostics })
}
