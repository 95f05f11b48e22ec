use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use maskselect::BinaryMask;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Photographic,
    Egocentric,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Photographic => "photographic",
            SourceKind::Egocentric => "egocentric",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub instances: Vec<BinaryMask>,
}

/// One annotated source image: its categories and their instance masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub image_id: String,
    pub source: SourceKind,
    pub width: usize,
    pub height: usize,
    pub categories: Vec<Category>,
}

impl SourceRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |m: String| Err(DatasetError::InvalidRecord(format!("{}: {m}", self.image_id)));
        if self.image_id.is_empty() {
            return fail("empty image_id".into());
        }
        if self.categories.is_empty() {
            return fail("no categories".into());
        }
        let mut seen = HashSet::new();
        for c in &self.categories {
            if !seen.insert(c.name.as_str()) {
                return fail(format!("duplicate category {:?}", c.name));
            }
            if c.instances.is_empty() {
                return fail(format!("category {:?} has no instances", c.name));
            }
            if let Some(m) = c.instances.iter().find(|m| m.dims() != (self.height, self.width)) {
                return fail(format!(
                    "category {:?} mask is {}x{}, image is {}x{}",
                    c.name,
                    m.height(),
                    m.width(),
                    self.height,
                    self.width
                ));
            }
        }
        Ok(())
    }

    pub fn category_names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    pub fn category(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complexity {
    Simple,
    Complex,
    Reject,
}

/// 2 to 5 categories is simple, 6 or more complex, fewer than 2 rejected.
pub fn classify_complexity(record: &SourceRecord) -> Complexity {
    match record.categories.len() {
        0 | 1 => Complexity::Reject,
        2..=5 => Complexity::Simple,
        _ => Complexity::Complex,
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| DatasetError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<(), DatasetError> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<SourceRecord>, DatasetError> {
    let records: Vec<SourceRecord> = read_jsonl(reader)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}
