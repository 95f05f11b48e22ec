//! Synthetic selection tasks standing in for real segmenter, feature and
//! vision-language outputs.
//!
//! Each sample is a 64x64 canvas with a few non-overlapping rectangles. Every
//! rectangle has its own unit feature vector painted into a coarse feature
//! grid; the SEG token is a noisy mean of the target rectangles' vectors; the
//! proposals are jittered copies of every rectangle plus random distractors.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use maskselect::mask::{mask_pool, read_feature_grid, write_feature_grid};
use maskselect::model::{read_seg_token, write_seg_token};
use maskselect::numerics::Tensor2;
use maskselect::proposals::{label_targets, load_proposal_set, save_proposal_set, MaskProposal, ProposalSet, TargetVector};
use maskselect::{iou, BinaryMask, FeatureGrid};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub canvas: usize,
    pub grid: usize,
    /// Feature channels; must equal the model width.
    pub dim: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_side: usize,
    pub max_side: usize,
    pub min_targets: usize,
    pub max_targets: usize,
    /// Each proposal edge moves by a uniform integer in `[-jitter, jitter]`.
    pub jitter: i64,
    pub distractors: usize,
    /// Standard deviation of the SEG token noise.
    pub sigma: f64,
    /// Standard deviation of per-cell background feature noise.
    pub background_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            canvas: 64,
            grid: 16,
            dim: 32,
            min_objects: 2,
            max_objects: 5,
            min_side: 10,
            max_side: 24,
            min_targets: 1,
            max_targets: 2,
            jitter: 2,
            distractors: 2,
            sigma: 0.05,
            background_noise: 0.05,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.canvas == 0 || self.grid == 0 || self.dim == 0 || self.grid > self.canvas {
            return fail("need positive dim and 1 <= grid <= canvas");
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return fail("need 1 <= min_objects <= max_objects");
        }
        if self.min_side == 0 || self.min_side > self.max_side || self.max_side > self.canvas {
            return fail("need 1 <= min_side <= max_side <= canvas");
        }
        if self.min_targets == 0 || self.min_targets > self.max_targets || self.min_targets > self.min_objects {
            return fail("need 1 <= min_targets <= max_targets and min_targets <= min_objects");
        }
        if self.jitter < 0 || !(self.sigma >= 0.0) || !(self.background_noise >= 0.0) {
            return fail("jitter and noise levels must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub grid: FeatureGrid,
    pub proposals: ProposalSet,
    pub gt: BinaryMask,
    pub seg: Vec<f64>,
    pub targets: TargetVector,
}

impl SyntheticSample {
    /// One pooled feature vector per proposal, in proposal order.
    pub fn embeddings(&self) -> Result<Tensor2, HarnessError> {
        let rows = self
            .proposals
            .proposals
            .iter()
            .map(|p| Ok(mask_pool(&self.grid, &p.mask)?.vector))
            .collect::<Result<Vec<_>, HarnessError>>()?;
        if rows.is_empty() {
            return Ok(Tensor2::zeros(0, self.grid.channels()));
        }
        Ok(Tensor2::from_rows(&rows).map_err(maskselect::model::ModelError::from)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    top: usize,
    left: usize,
    bottom: usize,
    right: usize,
}

impl Rect {
    fn overlaps(&self, o: &Rect) -> bool {
        self.top < o.bottom && o.top < self.bottom && self.left < o.right && o.left < self.right
    }

    fn mask(&self, n: usize) -> BinaryMask {
        BinaryMask::rect(n, n, self.top, self.left, self.bottom, self.right)
    }

    fn jittered<R: Rng>(&self, rng: &mut R, j: i64, n: usize) -> Rect {
        let mut shift = |v: usize| (v as i64 + rng.random_range(-j..=j)).clamp(0, n as i64) as usize;
        let (mut top, mut left, mut bottom, mut right) = (shift(self.top), shift(self.left), shift(self.bottom), shift(self.right));
        if bottom <= top {
            (top, bottom) = (top.min(n - 1), top.min(n - 1) + 1);
        }
        if right <= left {
            (left, right) = (left.min(n - 1), left.min(n - 1) + 1);
        }
        Rect { top, left, bottom, right }
    }
}

fn random_rect<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Rect {
    let h = rng.random_range(cfg.min_side..=cfg.max_side);
    let w = rng.random_range(cfg.min_side..=cfg.max_side);
    let top = rng.random_range(0..=cfg.canvas - h);
    let left = rng.random_range(0..=cfg.canvas - w);
    Rect { top, left, bottom: top + h, right: left + w }
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn to_f32_precision(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

/// Places up to `count` non-overlapping rectangles by rejection sampling.
fn place_objects<R: Rng>(rng: &mut R, cfg: &SynthConfig, count: usize) -> Vec<Rect> {
    let mut rects: Vec<Rect> = Vec::with_capacity(count);
    let mut attempts = 0;
    while rects.len() < count && attempts < 1000 {
        attempts += 1;
        let r = random_rect(rng, cfg);
        if rects.iter().all(|o| !o.overlaps(&r)) {
            rects.push(r);
        }
    }
    rects
}

fn paint_grid<R: Rng>(rng: &mut R, cfg: &SynthConfig, objects: &[(Rect, Vec<f64>)], background: &[f64]) -> Result<FeatureGrid, HarnessError> {
    let (n, g, d) = (cfg.canvas, cfg.grid, cfg.dim);
    let noise = Normal::new(0.0, cfg.background_noise).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let mut values = vec![0.0; g * g * d];
    for gr in 0..g {
        for gc in 0..g {
            let (r0, r1) = (gr * n / g, (gr + 1) * n / g);
            let (c0, c1) = (gc * n / g, (gc + 1) * n / g);
            let area = ((r1 - r0) * (c1 - c0)) as f64;
            let cell = &mut values[(gr * g + gc) * d..(gr * g + gc + 1) * d];
            let mut covered = 0.0;
            for (rect, v) in objects {
                let rows = rect.bottom.min(r1).saturating_sub(rect.top.max(r0));
                let cols = rect.right.min(c1).saturating_sub(rect.left.max(c0));
                let frac = (rows * cols) as f64 / area;
                if frac > 0.0 {
                    covered += frac;
                    cell.iter_mut().zip(v).for_each(|(c, x)| *c += frac * x);
                }
            }
            let bg = 1.0 - covered;
            for (c, b) in cell.iter_mut().zip(background) {
                *c += bg * (b + noise.sample(rng));
            }
        }
    }
    to_f32_precision(&mut values);
    Ok(FeatureGrid::new(g, g, d, values)?)
}

fn generate_one<R: Rng>(rng: &mut R, cfg: &SynthConfig, id: String) -> Result<SyntheticSample, HarnessError> {
    let n = cfg.canvas;
    let wanted = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let rects = place_objects(rng, cfg, wanted);
    if rects.len() < cfg.min_targets {
        return Err(HarnessError::InvalidConfig(format!("could not place {} objects on a {n}x{n} canvas", cfg.min_targets)));
    }
    let objects: Vec<(Rect, Vec<f64>)> = rects.iter().map(|r| (*r, unit_vector(rng, cfg.dim))).collect();
    let background = unit_vector(rng, cfg.dim);
    let grid = paint_grid(rng, cfg, &objects, &background)?;

    let n_targets = rng.random_range(cfg.min_targets..=cfg.max_targets).min(objects.len());
    let mut order: Vec<usize> = (0..objects.len()).collect();
    order.shuffle(rng);
    let mut targets: Vec<usize> = order[..n_targets].to_vec();
    targets.sort_unstable();
    let gt = maskselect::union_masks(targets.iter().map(|&t| objects[t].0.mask(n)).collect::<Vec<_>>().iter())?;

    let noise = Normal::new(0.0, cfg.sigma).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let mut seg: Vec<f64> = (0..cfg.dim)
        .map(|c| targets.iter().map(|&t| objects[t].1[c]).sum::<f64>() / n_targets as f64 + noise.sample(rng))
        .collect();
    to_f32_precision(&mut seg);

    let mut proposals = Vec::with_capacity(objects.len() + cfg.distractors);
    for (rect, _) in &objects {
        let m = rect.jittered(rng, cfg.jitter, n).mask(n);
        let predicted_iou = iou(&m, &rect.mask(n))?;
        proposals.push(MaskProposal { mask: m, predicted_iou, source_point: None });
    }
    for _ in 0..cfg.distractors {
        let m = random_rect(rng, cfg).mask(n);
        let predicted_iou = objects.iter().map(|(r, _)| iou(&m, &r.mask(n))).collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0, f64::max);
        proposals.push(MaskProposal { mask: m, predicted_iou, source_point: None });
    }
    proposals.shuffle(rng);
    let proposals = ProposalSet::new(id.clone(), n, n, proposals)?;
    let targets = label_targets(&proposals, &gt)?;
    Ok(SyntheticSample { id, grid, proposals, gt, seg, targets })
}

/// `n` samples, deterministic given `seed`. Grid values and SEG tokens are
/// rounded to f32 so that writing and reading a dataset is lossless.
pub fn synth_generate(n: usize, cfg: &SynthConfig, seed: u64) -> Result<Vec<SyntheticSample>, HarnessError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| generate_one(&mut rng, cfg, format!("s{i:05}"))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    grid: String,
    proposals: String,
    gt: String,
    seg: String,
    targets: TargetVector,
}

pub const INDEX_FILE: &str = "samples.jsonl";

/// Writes `samples.jsonl` plus per-sample `.fgrd`, `.proposals.json`,
/// `.gt.json` and `.segv` files.
pub fn write_dataset(dir: &Path, samples: &[SyntheticSample]) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut index = BufWriter::new(File::create(dir.join(INDEX_FILE))?);
    for s in samples {
        let e = IndexEntry {
            id: s.id.clone(),
            grid: format!("{}.fgrd", s.id),
            proposals: format!("{}.proposals.json", s.id),
            gt: format!("{}.gt.json", s.id),
            seg: format!("{}.segv", s.id),
            targets: s.targets.clone(),
        };
        let mut w = BufWriter::new(File::create(dir.join(&e.grid))?);
        write_feature_grid(&mut w, &s.grid)?;
        w.flush()?;
        save_proposal_set(&s.proposals, dir.join(&e.proposals))?;
        fs::write(dir.join(&e.gt), serde_json::to_string(&s.gt)?)?;
        let mut w = BufWriter::new(File::create(dir.join(&e.seg))?);
        write_seg_token(&mut w, &s.seg)?;
        w.flush()?;
        serde_json::to_writer(&mut index, &e)?;
        index.write_all(b"\n")?;
    }
    index.flush()?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Vec<SyntheticSample>, HarnessError> {
    let index_path = dir.join(INDEX_FILE);
    let file = File::open(&index_path).map_err(|e| HarnessError::DataMissing(format!("{}: {e}", index_path.display())))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: IndexEntry = serde_json::from_str(&line)?;
        let bad = |m: String| HarnessError::BadSample { sample: e.id.clone(), message: m };
        let grid = read_feature_grid(&mut BufReader::new(File::open(dir.join(&e.grid))?))?;
        let proposals = load_proposal_set(dir.join(&e.proposals))?;
        let gt: BinaryMask = serde_json::from_str(&fs::read_to_string(dir.join(&e.gt))?)?;
        let seg = read_seg_token(&mut BufReader::new(File::open(dir.join(&e.seg))?))?;
        if seg.len() != grid.channels() {
            return Err(bad(format!("seg dim {} != feature channels {}", seg.len(), grid.channels())));
        }
        if gt.dims() != (proposals.image_h, proposals.image_w) {
            return Err(bad("gt and proposal dimensions differ".into()));
        }
        if e.targets.ious.len() != proposals.len() || e.targets.iops.len() != proposals.len() {
            return Err(bad("target vector length differs from proposal count".into()));
        }
        out.push(SyntheticSample { id: e.id, grid, proposals, gt, seg, targets: e.targets });
    }
    if out.is_empty() {
        return Err(HarnessError::DataMissing(format!("{} lists no samples", index_path.display())));
    }
    Ok(out)
}
