use std::collections::BTreeSet;
use std::fmt;

use maskselect::{union_masks, BinaryMask};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::record::{SourceKind, SourceRecord};
use crate::response::ParsedQuestion;
use crate::sample::fisher_yates_prefix;
use crate::DatasetError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    #[serde(rename = "q")]
    pub question: String,
    #[serde(rename = "mask")]
    pub answer_mask: BinaryMask,
    #[serde(rename = "cats")]
    pub target_categories: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A record with its question/mask pairs, before split assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledRecord {
    pub image_id: String,
    pub source: SourceKind,
    pub width: usize,
    pub height: usize,
    pub qa_pairs: Vec<QaPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: String,
    pub source: SourceKind,
    #[serde(rename = "w")]
    pub width: usize,
    #[serde(rename = "h")]
    pub height: usize,
    pub split: Split,
    #[serde(rename = "qa")]
    pub qa_pairs: Vec<QaPair>,
}

/// Builds one answer mask per question: the union of every instance of every
/// resolved target category. Questions without a resolved category are
/// dropped and reported in the returned diagnostics.
pub fn assemble_record(source: &SourceRecord, questions: &[ParsedQuestion]) -> Result<(AssembledRecord, Vec<String>), DatasetError> {
    let mut qa_pairs = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, q) in questions.iter().enumerate() {
        let cats: Vec<_> = q.categories.iter().filter_map(|c| source.category(c)).collect();
        if cats.is_empty() {
            diagnostics.push(format!("{} question {}: dropped, no resolvable category", source.image_id, i + 1));
            continue;
        }
        let mask = union_masks(cats.iter().flat_map(|c| &c.instances))?;
        if mask.is_empty() {
            diagnostics.push(format!("{} question {}: dropped, empty answer mask", source.image_id, i + 1));
            continue;
        }
        qa_pairs.push(QaPair {
            question: q.question.clone(),
            answer_mask: mask,
            target_categories: cats.iter().map(|c| c.name.clone()).collect(),
        });
    }
    if qa_pairs.is_empty() {
        return Err(DatasetError::NoValidPairs(source.image_id.clone()));
    }
    let rec = AssembledRecord {
        image_id: source.image_id.clone(),
        source: source.source,
        width: source.width,
        height: source.height,
        qa_pairs,
    };
    Ok((rec, diagnostics))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 11.0 / 14.0, val: 1.0 / 14.0, test: 2.0 / 14.0 }
    }
}

const RATIO_EPS: f64 = 1e-9;

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(DatasetError::InvalidRatios(format!("{r:?} must be finite and nonnegative")));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DatasetError::InvalidRatios(format!("{r:?} sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` records: val and test are floored,
    /// the residue goes to train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let val = ((n as f64 * self.val + RATIO_EPS).floor() as usize).min(n);
        let test = ((n as f64 * self.test + RATIO_EPS).floor() as usize).min(n - val);
        (n - val - test, val, test)
    }
}

/// Seeded shuffle (over records ordered by image id) then a contiguous
/// train/val/test partition. Output is ordered by image id.
pub fn assign_splits(records: Vec<AssembledRecord>, ratios: SplitRatios, seed: u64) -> Result<Vec<ManifestRecord>, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    ratios.validate()?;
    let mut records = records;
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    fisher_yates_prefix(&mut order, n, &mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = ratios.counts(n);
    let mut splits = vec![Split::Train; n];
    for (pos, &idx) in order.iter().enumerate() {
        splits[idx] = if pos < train {
            Split::Train
        } else if pos < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(records
        .into_iter()
        .zip(splits)
        .map(|(r, split)| ManifestRecord {
            image_id: r.image_id,
            source: r.source,
            width: r.width,
            height: r.height,
            split,
            qa_pairs: r.qa_pairs,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub images: usize,
    pub pairs: usize,
    pub avg_pairs_per_image: f64,
    /// Whitespace-separated tokens per question, averaged over all pairs.
    pub avg_question_words: f64,
    pub distinct_categories: usize,
    pub splits: SplitCounts,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "images               {}", self.images)?;
        writeln!(f, "pairs                {}", self.pairs)?;
        writeln!(f, "pairs per image      {:.2}", self.avg_pairs_per_image)?;
        writeln!(f, "words per question   {:.2}", self.avg_question_words)?;
        writeln!(f, "distinct categories  {}", self.distinct_categories)?;
        write!(f, "splits               train {} / val {} / test {}", self.splits.train, self.splits.val, self.splits.test)
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn dataset_stats(manifest: &[ManifestRecord]) -> Result<DatasetStats, DatasetError> {
    if manifest.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let mut pairs = 0usize;
    let mut words = 0usize;
    let mut cats = BTreeSet::new();
    let mut splits = SplitCounts::default();
    for r in manifest {
        match r.split {
            Split::Train => splits.train += 1,
            Split::Val => splits.val += 1,
            Split::Test => splits.test += 1,
        }
        for qa in &r.qa_pairs {
            pairs += 1;
            words += word_count(&qa.question);
            cats.extend(qa.target_categories.iter().map(String::as_str));
        }
    }
    Ok(DatasetStats {
        images: manifest.len(),
        pairs,
        avg_pairs_per_image: pairs as f64 / manifest.len() as f64,
        avg_question_words: if pairs == 0 { 0.0 } else { words as f64 / pairs as f64 },
        distinct_categories: cats.len(),
        splits,
    })
}
