//! Seeded stratified sampling without replacement.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::record::{classify_complexity, Complexity, SourceKind, SourceRecord};
use crate::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Simple,
    Complex,
    Egocentric,
}

impl Stratum {
    pub const ORDER: [Stratum; 3] = [Stratum::Simple, Stratum::Complex, Stratum::Egocentric];
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::Simple => "simple",
            Stratum::Complex => "complex",
            Stratum::Egocentric => "egocentric",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub simple: usize,
    pub complex: usize,
    pub egocentric: usize,
}

impl StratumCounts {
    pub fn get(&self, s: Stratum) -> usize {
        match s {
            Stratum::Simple => self.simple,
            Stratum::Complex => self.complex,
            Stratum::Egocentric => self.egocentric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumDeficit {
    pub stratum: Stratum,
    pub requested: usize,
    pub available: usize,
}

/// Selected image ids per stratum, in sampling order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub simple: Vec<String>,
    pub complex: Vec<String>,
    pub egocentric: Vec<String>,
}

impl Selection {
    pub fn get(&self, s: Stratum) -> &[String] {
        match s {
            Stratum::Simple => &self.simple,
            Stratum::Complex => &self.complex,
            Stratum::Egocentric => &self.egocentric,
        }
    }

    fn get_mut(&mut self, s: Stratum) -> &mut Vec<String> {
        match s {
            Stratum::Simple => &mut self.simple,
            Stratum::Complex => &mut self.complex,
            Stratum::Egocentric => &mut self.egocentric,
        }
    }

    /// All ids, strata in [`Stratum::ORDER`].
    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.simple.iter().chain(&self.complex).chain(&self.egocentric)
    }
}

/// Photographic images split by complexity; egocentric images need more than
/// two categories. Everything else belongs to no stratum.
pub fn stratum_of(record: &SourceRecord) -> Option<Stratum> {
    match record.source {
        SourceKind::Photographic => match classify_complexity(record) {
            Complexity::Simple => Some(Stratum::Simple),
            Complexity::Complex => Some(Stratum::Complex),
            Complexity::Reject => None,
        },
        SourceKind::Egocentric => (record.categories.len() > 2).then_some(Stratum::Egocentric),
    }
}

/// Moves a uniform random `k`-subset to the front of `items` (the first `k`
/// iterations of a forward Fisher-Yates shuffle).
pub fn fisher_yates_prefix<T, R: Rng>(items: &mut [T], k: usize, rng: &mut R) {
    let n = items.len();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        items.swap(i, j);
    }
}

/// Samples `counts` ids from each stratum with one generator seeded by `seed`,
/// drawing the strata in [`Stratum::ORDER`]. Candidates within a stratum are
/// ordered by image id first so the result does not depend on corpus order.
pub fn stratified_sample(corpus: &[SourceRecord], counts: StratumCounts, seed: u64) -> Result<Selection, DatasetError> {
    let mut pools: [Vec<String>; 3] = Default::default();
    for r in corpus {
        if let Some(s) = stratum_of(r) {
            pools[s as usize].push(r.image_id.clone());
        }
    }
    let deficits: Vec<StratumDeficit> = Stratum::ORDER
        .iter()
        .filter(|&&s| counts.get(s) > pools[s as usize].len())
        .map(|&s| StratumDeficit { stratum: s, requested: counts.get(s), available: pools[s as usize].len() })
        .collect();
    if !deficits.is_empty() {
        return Err(DatasetError::CorpusTooSmall(deficits));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Selection::default();
    for s in Stratum::ORDER {
        let pool = &mut pools[s as usize];
        pool.sort();
        let k = counts.get(s);
        fisher_yates_prefix(pool, k, &mut rng);
        *out.get_mut(s) = pool[..k].to_vec();
    }
    Ok(out)
}
