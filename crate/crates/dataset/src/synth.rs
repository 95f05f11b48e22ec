use maskselect::BinaryMask;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::record::{Category, SourceKind, SourceRecord};

const VOCABULARY: &[&str] = &[
    "apple", "backpack", "banana", "bed", "bench", "bicycle", "book", "bottle", "bowl", "box", "bucket", "cabinet",
    "candle", "car", "chair", "clock", "cup", "curtain", "desk", "dog", "door", "fan", "fork", "guitar", "hat",
    "helmet", "kettle", "keyboard", "knife", "lamp", "laptop", "mirror", "mug", "pillow", "plant", "plate",
    "refrigerator", "remote", "rug", "scissors", "shelf", "shoe", "sink", "sofa", "spoon", "stool", "suitcase",
    "table", "teapot", "television", "towel", "umbrella", "vase", "window",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub min_side: usize,
    pub max_side: usize,
    pub max_categories: usize,
    pub max_instances: usize,
    pub egocentric_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { min_side: 24, max_side: 48, max_categories: 12, max_instances: 2, egocentric_fraction: 0.3 }
    }
}

fn random_rect<R: Rng>(rng: &mut R, h: usize, w: usize) -> BinaryMask {
    let top = rng.random_range(0..h);
    let left = rng.random_range(0..w);
    let bottom = rng.random_range(top + 1..=h.min(top + h / 2 + 1));
    let right = rng.random_range(left + 1..=w.min(left + w / 2 + 1));
    BinaryMask::rect(h, w, top, left, bottom, right)
}

/// Random annotated images with 1 to `max_categories` categories of
/// rectangular instances. Deterministic given `seed`.
pub fn synth_corpus(n: usize, config: CorpusConfig, seed: u64) -> Vec<SourceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_categories = config.max_categories.clamp(1, VOCABULARY.len());
    (0..n)
        .map(|i| {
            let height = rng.random_range(config.min_side..=config.max_side);
            let width = rng.random_range(config.min_side..=config.max_side);
            let source = if rng.random_bool(config.egocentric_fraction.clamp(0.0, 1.0)) {
                SourceKind::Egocentric
            } else {
                SourceKind::Photographic
            };
            let k = rng.random_range(1..=max_categories);
            let names: Vec<&str> = VOCABULARY.choose_multiple(&mut rng, k).copied().collect();
            let categories = names
                .into_iter()
                .map(|name| {
                    let m = rng.random_range(1..=config.max_instances.max(1));
                    Category { name: name.to_string(), instances: (0..m).map(|_| random_rect(&mut rng, height, width)).collect() }
                })
                .collect();
            SourceRecord { image_id: format!("img{i:06}"), source, width, height, categories }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_are_valid_and_deterministic() {
        let a = synth_corpus(50, CorpusConfig::default(), 4);
        assert_eq!(a, synth_corpus(50, CorpusConfig::default(), 4));
        for r in &a {
            r.validate().unwrap();
            assert!(r.categories.iter().flat_map(|c| &c.instances).all(|m| !m.is_empty()));
        }
        assert!(a.iter().any(|r| r.source == SourceKind::Egocentric));
        assert!(a.iter().any(|r| r.categories.len() == 1));
    }
}
