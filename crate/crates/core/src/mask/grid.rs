//! Feature grids and mask pooling.

use std::io::{Read, Write};

use super::{BinaryMask, MaskError};
use crate::binio::{self, FormatError};

const FGRD_MAGIC: &[u8; 4] = b"FGRD";
const FGRD_VERSION: u32 = 1;

/// An `grid_h x grid_w x channels` feature map, row-major over (row, col, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    grid_h: usize,
    grid_w: usize,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(grid_h: usize, grid_w: usize, channels: usize, values: Vec<f64>) -> Result<Self, MaskError> {
        if grid_h == 0 || grid_w == 0 || channels == 0 {
            return Err(MaskError::InvalidGrid(format!("zero dimension {grid_h}x{grid_w}x{channels}")));
        }
        if values.len() != grid_h * grid_w * channels {
            return Err(MaskError::InvalidGrid(format!(
                "{} values for {grid_h}x{grid_w}x{channels}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MaskError::InvalidGrid(format!("non-finite value at {i}")));
        }
        Ok(FeatureGrid { grid_h, grid_w, channels, values })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.grid_w + col) * self.channels;
        &self.values[start..start + self.channels]
    }
}

/// Fraction of each grid cell's pixel footprint that is foreground.
///
/// Pixel and cell boundaries are compared in a common integer coordinate
/// system (rows scaled by `grid_h`, columns by `grid_w`), so every overlap is an
/// exact integer and only the final division is floating point.
pub fn coverage_weights(mask: &BinaryMask, grid_h: usize, grid_w: usize) -> Result<Vec<f64>, MaskError> {
    let (h, w) = mask.dims();
    if grid_h == 0 || grid_w == 0 {
        return Err(MaskError::InvalidSize(grid_h, grid_w));
    }
    if h == 0 || w == 0 {
        return Err(MaskError::InvalidSize(h, w));
    }
    let col_spans = spans(w, grid_w);
    let row_spans = spans(h, grid_h);
    let mut acc = vec![0u64; grid_h * grid_w];
    let mut per_row = vec![0u64; grid_w];
    for (r, row_cells) in row_spans.iter().enumerate() {
        per_row.iter_mut().for_each(|v| *v = 0);
        let mut any = false;
        for (c, col_cells) in col_spans.iter().enumerate() {
            if mask.get(r, c) {
                any = true;
                for &(gj, len) in col_cells {
                    per_row[gj] += len;
                }
            }
        }
        if !any {
            continue;
        }
        for &(gi, len) in row_cells {
            for (gj, &v) in per_row.iter().enumerate() {
                acc[gi * grid_w + gj] += len * v;
            }
        }
    }
    let cell_area = (h * w) as f64;
    Ok(acc.into_iter().map(|a| a as f64 / cell_area).collect())
}

/// For each of `pixels` source positions, the cells it overlaps and the
/// overlap length in scaled units (pixel `p` spans `[p*cells, (p+1)*cells)`,
/// cell `g` spans `[g*pixels, (g+1)*pixels)`).
fn spans(pixels: usize, cells: usize) -> Vec<Vec<(usize, u64)>> {
    (0..pixels)
        .map(|p| {
            let (start, end) = (p * cells, (p + 1) * cells);
            let first = start / pixels;
            let last = (end - 1) / pixels;
            (first..=last)
                .map(|g| {
                    let lo = start.max(g * pixels);
                    let hi = end.min((g + 1) * pixels);
                    (g, (hi - lo) as u64)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding {
    pub vector: Vec<f64>,
    /// Set when the mask covers no cell at all; `vector` is then the plain
    /// mean over every cell.
    pub degenerate: bool,
}

/// Coverage-weighted mean of the feature vectors under `mask`.
pub fn mask_pool(features: &FeatureGrid, mask: &BinaryMask) -> Result<PooledEmbedding, MaskError> {
    let weights = coverage_weights(mask, features.grid_h, features.grid_w)?;
    let total: f64 = weights.iter().sum();
    let ch = features.channels;
    let mut vector = vec![0.0; ch];
    let degenerate = total <= 0.0;
    for (cell, &wt) in features.values.chunks_exact(ch).zip(&weights) {
        let wt = if degenerate { 1.0 } else { wt };
        if wt == 0.0 {
            continue;
        }
        for (acc, &v) in vector.iter_mut().zip(cell) {
            *acc += wt * v;
        }
    }
    let norm = if degenerate { weights.len() as f64 } else { total };
    vector.iter_mut().for_each(|v| *v /= norm);
    Ok(PooledEmbedding { vector, degenerate })
}

pub fn write_feature_grid<W: Write>(w: &mut W, grid: &FeatureGrid) -> std::io::Result<()> {
    w.write_all(FGRD_MAGIC)?;
    binio::write_u32(w, FGRD_VERSION)?;
    binio::write_u32(w, binio::to_u32(grid.grid_h, "grid_h")?)?;
    binio::write_u32(w, binio::to_u32(grid.grid_w, "grid_w")?)?;
    binio::write_u32(w, binio::to_u32(grid.channels, "channels")?)?;
    binio::write_f32s(w, grid.values.iter().copied())
}

pub fn read_feature_grid<R: Read>(r: &mut R) -> Result<FeatureGrid, FormatError> {
    binio::expect_magic(r, FGRD_MAGIC)?;
    let version = binio::read_u32(r)?;
    if version != FGRD_VERSION {
        return Err(FormatError::Version { expected: FGRD_VERSION, found: version });
    }
    let gh = binio::read_u32(r)? as usize;
    let gw = binio::read_u32(r)? as usize;
    let ch = binio::read_u32(r)? as usize;
    let n = gh
        .checked_mul(gw)
        .and_then(|v| v.checked_mul(ch))
        .ok_or_else(|| FormatError::Invalid("feature grid too large".into()))?;
    let values = binio::read_f32s(r, n)?.into_iter().map(f64::from).collect();
    FeatureGrid::new(gh, gw, ch, values).map_err(|e| FormatError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_2x2() -> FeatureGrid {
        // v00, v01, v10, v11 with 2 channels each
        FeatureGrid::new(2, 2, 2, vec![1.0, 0.0, 3.0, 2.0, -1.0, 5.0, 7.0, 4.0]).unwrap()
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage_weights(&BinaryMask::ones(4, 4), 2, 2).unwrap(), vec![1.0; 4]);
        assert_eq!(coverage_weights(&BinaryMask::zeros(4, 4), 2, 2).unwrap(), vec![0.0; 4]);
        let rows01 = BinaryMask::from_fn(4, 4, |r, _| r < 2);
        assert_eq!(coverage_weights(&rows01, 2, 2).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
        assert!(coverage_weights(&rows01, 0, 2).is_err());
    }

    #[test]
    fn coverage_fractional_footprints() {
        // 3 pixels across 2 cells: the middle pixel is split half/half.
        let middle = BinaryMask::from_fn(1, 3, |_, c| c == 1);
        let w = coverage_weights(&middle, 1, 2).unwrap();
        assert_eq!(w, vec![1.0 / 3.0, 1.0 / 3.0]);
        // Finer grid than mask: every cell inside one pixel takes its value.
        let px = BinaryMask::from_fn(2, 2, |r, c| r == 1 && c == 0);
        let w = coverage_weights(&px, 4, 4).unwrap();
        let set: Vec<usize> = (0..16).filter(|&i| w[i] == 1.0).collect();
        assert_eq!(set, vec![8, 9, 12, 13]);
    }

    #[test]
    fn pool_examples() {
        let g = grid_2x2();
        let one_cell = BinaryMask::from_fn(4, 4, |r, c| r >= 2 && c < 2);
        assert_eq!(mask_pool(&g, &one_cell).unwrap().vector, g.cell(1, 0).to_vec());
        let all = mask_pool(&g, &BinaryMask::ones(4, 4)).unwrap();
        assert_eq!(all.vector, vec![2.5, 2.75]);
        assert!(!all.degenerate);
        let rows01 = BinaryMask::from_fn(4, 4, |r, _| r < 2);
        assert_eq!(mask_pool(&g, &rows01).unwrap().vector, vec![2.0, 1.0]);
        let empty = mask_pool(&g, &BinaryMask::zeros(4, 4)).unwrap();
        assert!(empty.degenerate);
        assert_eq!(empty.vector, all.vector);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(FeatureGrid::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(FeatureGrid::new(1, 2, 1, vec![0.0]).is_err());
    }

    #[test]
    fn fgrd_round_trip_and_errors() {
        let g = grid_2x2();
        let mut buf = Vec::new();
        write_feature_grid(&mut buf, &g).unwrap();
        assert_eq!(&buf[..4], b"FGRD");
        assert_eq!(buf.len(), 20 + 8 * 4);
        assert_eq!(read_feature_grid(&mut buf.as_slice()).unwrap(), g);
        assert!(matches!(read_feature_grid(&mut &buf[..30]), Err(FormatError::Truncated)));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_feature_grid(&mut bad.as_slice()), Err(FormatError::BadMagic { .. })));
        let mut v2 = buf.clone();
        v2[4] = 2;
        assert!(matches!(read_feature_grid(&mut v2.as_slice()), Err(FormatError::Version { found: 2, .. })));
    }

    proptest! {
        #[test]
        fn coverage_mass_equals_area(h in 1usize..20, w in 1usize..20, gh in 1usize..9, gw in 1usize..9, bits in prop::collection::vec(any::<bool>(), 400)) {
            let m = BinaryMask::from_fn(h, w, |r, c| bits[r * 20 + c]);
            let wts = coverage_weights(&m, gh, gw).unwrap();
            let cell_area = (h * w) as f64 / (gh * gw) as f64;
            let mass: f64 = wts.iter().map(|x| x * cell_area).sum();
            prop_assert!((mass - m.area() as f64).abs() < 1e-9);
            prop_assert!(wts.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn pooled_vector_within_cell_hull(vals in prop::collection::vec(-5.0f64..5.0, 3 * 3 * 2), bits in prop::collection::vec(any::<bool>(), 49)) {
            let g = FeatureGrid::new(3, 3, 2, vals.clone()).unwrap();
            let m = BinaryMask::from_fn(7, 7, |r, c| bits[r * 7 + c]);
            let p = mask_pool(&g, &m).unwrap();
            for ch in 0..2 {
                let column = vals.iter().skip(ch).step_by(2);
                let lo = column.clone().cloned().fold(f64::INFINITY, f64::min);
                let hi = column.cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(p.vector[ch] >= lo - 1e-12 && p.vector[ch] <= hi + 1e-12);
            }
        }
    }
}
