//! Binary masks and the overlap measures built on them.
//!
//! Masks are stored as packed bits in row-major order. All overlap counts are
//! integer popcounts; conversion to a fraction happens only at the very end.

mod grid;
mod rle;

pub use grid::{coverage_weights, mask_pool, read_feature_grid, write_feature_grid, FeatureGrid, PooledEmbedding};
pub use rle::{rle_decode, rle_encode, MaskJson, RleCounts};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("run lengths sum to {got}, expected {expected}")]
    LengthMismatch { expected: u64, got: u64 },
    #[error("invalid size {0}x{1}")]
    InvalidSize(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid feature grid: {0}")]
    InvalidGrid(String),
}

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<u64>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BinaryMask({}x{}, area={})", self.height, self.width, self.area())
    }
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        BinaryMask { height, width, bits: vec![0; n.div_ceil(WORD)] }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        let mut m = Self::zeros(height, width);
        for w in m.bits.iter_mut() {
            *w = u64::MAX;
        }
        m.clear_tail();
        m
    }

    /// Builds a mask by evaluating `f(row, col)` for every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    /// Row-major booleans; `values.len()` must equal `height * width`.
    pub fn from_bools(height: usize, width: usize, values: &[bool]) -> Result<Self, MaskError> {
        let expected = (height * width) as u64;
        if values.len() as u64 != expected {
            return Err(MaskError::LengthMismatch { expected, got: values.len() as u64 });
        }
        Ok(Self::from_fn(height, width, |r, c| values[r * width + c]))
    }

    /// Axis-aligned rectangle `[top, bottom) x [left, right)`, clipped to the canvas.
    pub fn rect(height: usize, width: usize, top: usize, left: usize, bottom: usize, right: usize) -> Self {
        let (bottom, right) = (bottom.min(height), right.min(width));
        let mut m = Self::zeros(height, width);
        for r in top..bottom {
            for c in left..right {
                m.set(r, c, true);
            }
        }
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        let i = row * self.width + col;
        (self.bits[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let i = row * self.width + col;
        let bit = 1u64 << (i % WORD);
        if value {
            self.bits[i / WORD] |= bit;
        } else {
            self.bits[i / WORD] &= !bit;
        }
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// True when no pixel is set.
    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len()).map(|i| (self.bits[i / WORD] >> (i % WORD)) & 1 == 1).collect()
    }

    fn clear_tail(&mut self) {
        let n = self.len();
        if !n.is_multiple_of(WORD) {
            if let Some(last) = self.bits.last_mut() {
                *last &= (1u64 << (n % WORD)) - 1;
            }
        }
    }

    fn check_same(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.dims() != other.dims() {
            return Err(MaskError::DimensionMismatch(self.height, self.width, other.height, other.width));
        }
        Ok(())
    }

    /// `|self ∩ other|`
    pub fn intersection_count(&self, other: &BinaryMask) -> Result<u64, MaskError> {
        self.check_same(other)?;
        Ok(self.bits.iter().zip(&other.bits).map(|(a, b)| (a & b).count_ones() as u64).sum())
    }

    /// `|self ∪ other|`
    pub fn union_count(&self, other: &BinaryMask) -> Result<u64, MaskError> {
        self.check_same(other)?;
        Ok(self.bits.iter().zip(&other.bits).map(|(a, b)| (a | b).count_ones() as u64).sum())
    }

    /// Integer intersection and union counts in a single pass.
    pub fn overlap_counts(&self, other: &BinaryMask) -> Result<(u64, u64), MaskError> {
        self.check_same(other)?;
        let mut inter = 0u64;
        let mut union = 0u64;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (a & b).count_ones() as u64;
            union += (a | b).count_ones() as u64;
        }
        Ok((inter, union))
    }

    pub fn or_assign(&mut self, other: &BinaryMask) -> Result<(), MaskError> {
        self.check_same(other)?;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
        Ok(())
    }
}

/// Intersection over union. Two empty masks are a perfect match (1.0).
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    let (inter, union) = a.overlap_counts(b)?;
    Ok(ratio_or(inter, union, 1.0))
}

/// Intersection over prediction, `|gt ∩ pred| / |pred|`; 0.0 for an empty prediction.
pub fn iop(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MaskError> {
    let inter = pred.intersection_count(gt)?;
    Ok(ratio_or(inter, pred.area(), 0.0))
}

pub(crate) fn ratio_or(num: u64, den: u64, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Pixelwise OR of a nonempty sequence of equally sized masks.
pub fn union_masks<'a, I>(masks: I) -> Result<BinaryMask, MaskError>
where
    I: IntoIterator<Item = &'a BinaryMask>,
{
    let mut iter = masks.into_iter();
    let mut out = iter.next().ok_or(MaskError::EmptyInput)?.clone();
    for m in iter {
        out.or_assign(m)?;
    }
    Ok(out)
}

/// Nearest-neighbour resampling; output pixel `(r, c)` reads source
/// `(r * h / out_h, c * w / out_w)` with floor division.
pub fn resize_nearest(mask: &BinaryMask, out_h: usize, out_w: usize) -> Result<BinaryMask, MaskError> {
    if out_h == 0 || out_w == 0 {
        return Err(MaskError::InvalidSize(out_h, out_w));
    }
    if mask.dims() == (out_h, out_w) {
        return Ok(mask.clone());
    }
    let (h, w) = mask.dims();
    if h == 0 || w == 0 {
        return Err(MaskError::InvalidSize(h, w));
    }
    let src_cols: Vec<usize> = (0..out_w).map(|c| c * w / out_w).collect();
    let mut out = BinaryMask::zeros(out_h, out_w);
    for r in 0..out_h {
        let sr = r * h / out_h;
        for (c, &sc) in src_cols.iter().enumerate() {
            if mask.get(sr, sc) {
                out.set(r, c, true);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows01() -> BinaryMask {
        BinaryMask::from_fn(4, 4, |r, _| r < 2)
    }

    fn cols01() -> BinaryMask {
        BinaryMask::from_fn(4, 4, |_, c| c < 2)
    }

    #[test]
    fn iou_examples() {
        let a = rows01();
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let top = BinaryMask::rect(4, 4, 0, 0, 1, 4);
        let bottom = BinaryMask::rect(4, 4, 3, 0, 4, 4);
        assert_eq!(iou(&top, &bottom).unwrap(), 0.0);
        assert_eq!(a.overlap_counts(&cols01()).unwrap(), (4, 12));
        assert!((iou(&a, &cols01()).unwrap() - 4.0 / 12.0).abs() < 1e-15);
        assert_eq!(iou(&BinaryMask::zeros(3, 3), &BinaryMask::zeros(3, 3)).unwrap(), 1.0);
        assert!(matches!(
            iou(&a, &BinaryMask::zeros(4, 5)),
            Err(MaskError::DimensionMismatch(4, 4, 4, 5))
        ));
    }

    #[test]
    fn iop_examples() {
        let gt = rows01();
        let inside = BinaryMask::rect(4, 4, 0, 0, 1, 2);
        assert_eq!(iop(&inside, &gt).unwrap(), 1.0);
        let outside = BinaryMask::rect(4, 4, 3, 0, 4, 4);
        assert_eq!(iop(&outside, &gt).unwrap(), 0.0);
        assert_eq!(iop(&cols01(), &gt).unwrap(), 0.5);
        assert_eq!(iop(&BinaryMask::zeros(4, 4), &gt).unwrap(), 0.0);
    }

    #[test]
    fn union_examples() {
        let a = rows01();
        assert_eq!(union_masks([&a]).unwrap(), a);
        assert_eq!(union_masks([&a, &a]).unwrap(), a);
        let l = union_masks([&a, &cols01()]).unwrap();
        assert_eq!(l.area(), 12);
        assert!(l.get(3, 0) && l.get(0, 3) && !l.get(3, 3));
        assert_eq!(union_masks(std::iter::empty()), Err(MaskError::EmptyInput));
        assert!(union_masks([&a, &BinaryMask::zeros(2, 2)]).is_err());
    }

    #[test]
    fn resize_examples() {
        let a = rows01();
        assert_eq!(resize_nearest(&a, 4, 4).unwrap(), a);
        assert_eq!(resize_nearest(&BinaryMask::ones(2, 2), 4, 4).unwrap(), BinaryMask::ones(4, 4));
        let corner = BinaryMask::from_fn(2, 2, |r, c| r == 0 && c == 0);
        let up = resize_nearest(&corner, 4, 4).unwrap();
        assert_eq!(up, BinaryMask::rect(4, 4, 0, 0, 2, 2));
        assert_eq!(resize_nearest(&a, 0, 3), Err(MaskError::InvalidSize(0, 3)));
    }

    #[test]
    fn ones_clears_padding_bits() {
        let m = BinaryMask::ones(3, 5);
        assert_eq!(m.area(), 15);
        assert_eq!(m, BinaryMask::from_fn(3, 5, |_, _| true));
    }

    fn arb_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask, BinaryMask)> {
        (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
            let n = h * w;
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(a, b, c)| {
                    (
                        BinaryMask::from_bools(h, w, &a).unwrap(),
                        BinaryMask::from_bools(h, w, &b).unwrap(),
                        BinaryMask::from_bools(h, w, &c).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded((a, b, _) in arb_pair()) {
            let x = iou(&a, &b).unwrap();
            prop_assert_eq!(x, iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn iop_is_one_iff_contained((p, g, _) in arb_pair()) {
            let contained = !p.is_empty() && p.intersection_count(&g).unwrap() == p.area();
            prop_assert_eq!(iop(&p, &g).unwrap() == 1.0, contained);
        }

        #[test]
        fn union_set_algebra((a, b, c) in arb_pair()) {
            let ab = union_masks([&a, &b]).unwrap();
            prop_assert_eq!(&ab, &union_masks([&b, &a]).unwrap());
            let left = union_masks([&ab, &c]).unwrap();
            let bc = union_masks([&b, &c]).unwrap();
            prop_assert_eq!(left, union_masks([&a, &bc]).unwrap());
            prop_assert_eq!(union_masks([&a, &a]).unwrap(), a);
        }

        #[test]
        fn resize_to_own_size_is_identity((a, _, _) in arb_pair()) {
            let (h, w) = a.dims();
            prop_assert_eq!(resize_nearest(&a, h, w).unwrap(), a);
        }
    }
}
