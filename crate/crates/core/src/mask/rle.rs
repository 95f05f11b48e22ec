//! Uncompressed COCO run-length encoding.
//!
//! Runs scan the mask column by column (column-major) and alternate
//! background/foreground, starting with background. A mask whose first pixel is
//! foreground therefore starts with a zero-length run.

use serde::{Deserialize, Serialize};

use super::{BinaryMask, MaskError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RleCounts {
    pub counts: Vec<u64>,
}

impl RleCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Foreground area without decoding (odd-indexed runs).
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleCounts {
    let (h, w) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for c in 0..w {
        for r in 0..h {
            let v = mask.get(r, c);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleCounts { counts }
}

/// Decodes column-major runs. Any run list with the right total is accepted;
/// re-encoding the result yields the canonical form.
pub fn rle_decode(rle: &RleCounts, h: usize, w: usize) -> Result<BinaryMask, MaskError> {
    let expected = (h * w) as u64;
    let got = rle.total();
    if got != expected {
        return Err(MaskError::LengthMismatch { expected, got });
    }
    let mut mask = BinaryMask::zeros(h, w);
    let mut pos = 0usize;
    let mut fg = false;
    for &run in &rle.counts {
        let run = run as usize;
        if fg {
            for i in pos..pos + run {
                mask.set(i % h, i / h, true);
            }
        }
        pos += run;
        fg = !fg;
    }
    Ok(mask)
}

/// The on-disk mask object `{"h": .., "w": .., "counts": [..]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskJson {
    pub h: usize,
    pub w: usize,
    pub counts: Vec<u64>,
}

impl From<&BinaryMask> for MaskJson {
    fn from(mask: &BinaryMask) -> Self {
        MaskJson { h: mask.height(), w: mask.width(), counts: rle_encode(mask).counts }
    }
}

impl TryFrom<MaskJson> for BinaryMask {
    type Error = MaskError;

    fn try_from(value: MaskJson) -> Result<Self, Self::Error> {
        rle_decode(&RleCounts { counts: value.counts }, value.h, value.w)
    }
}

impl Serialize for BinaryMask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        MaskJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BinaryMask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = MaskJson::deserialize(deserializer)?;
        BinaryMask::try_from(json).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_examples() {
        assert_eq!(rle_encode(&BinaryMask::zeros(2, 2)).counts, vec![4]);
        assert_eq!(rle_encode(&BinaryMask::ones(2, 2)).counts, vec![0, 4]);
        // Column-major scan of pixel (0,1): (0,0) (1,0) (0,1) (1,1) -> 0 0 1 0.
        let m = BinaryMask::from_fn(2, 2, |r, c| r == 0 && c == 1);
        assert_eq!(rle_encode(&m).counts, vec![2, 1, 1]);
    }

    #[test]
    fn decode_examples() {
        let d = |c: Vec<u64>| rle_decode(&RleCounts { counts: c }, 2, 2).unwrap();
        assert_eq!(d(vec![4]), BinaryMask::zeros(2, 2));
        assert_eq!(d(vec![0, 4]), BinaryMask::ones(2, 2));
        let m = d(vec![2, 1, 1]);
        assert_eq!(m.area(), 1);
        assert!(m.get(0, 1));
        assert_eq!(
            rle_decode(&RleCounts { counts: vec![3] }, 2, 2),
            Err(MaskError::LengthMismatch { expected: 4, got: 3 })
        );
    }

    #[test]
    fn non_canonical_runs_are_canonicalised_on_reencode() {
        let m = rle_decode(&RleCounts { counts: vec![1, 0, 2, 1] }, 2, 2).unwrap();
        assert_eq!(rle_encode(&m).counts, vec![3, 1]);
    }

    #[test]
    fn json_shape() {
        let m = BinaryMask::from_fn(2, 2, |r, c| r == 0 && c == 1);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"h":2,"w":2,"counts":[2,1,1]}"#);
        let back: BinaryMask = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<BinaryMask>(r#"{"h":2,"w":2,"counts":[5]}"#).is_err());
    }

    fn canonical(counts: &[u64]) -> bool {
        counts.iter().enumerate().all(|(i, &c)| c > 0 || (i == 0 && counts.len() > 1) || counts.len() == 1)
    }

    proptest! {
        #[test]
        fn round_trip(h in 1usize..40, w in 1usize..40, seed in any::<u64>()) {
            let mut state = seed | 1;
            let m = BinaryMask::from_fn(h, w, |_, _| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                state % 3 == 0
            });
            let rle = rle_encode(&m);
            prop_assert_eq!(rle.total(), (h * w) as u64);
            prop_assert_eq!(rle.area(), m.area());
            prop_assert!(canonical(&rle.counts));
            let back = rle_decode(&rle, h, w).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(rle_encode(&back), rle);
        }
    }
}
