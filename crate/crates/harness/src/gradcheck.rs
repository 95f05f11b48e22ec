use maskselect::model::{gradient_check, GradCheckReport, ModelConfig, SelectionModel};
use maskselect::numerics::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::HarnessError;

/// Largest relative error accepted for any block.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckRun {
    pub seed: u64,
    pub proposals: usize,
    pub dim: usize,
    pub corrupted: bool,
    pub report: GradCheckReport,
    pub passed: bool,
}

/// Checks analytic gradients of a randomly sized model on random inputs.
/// With `corrupt` set, one analytic gradient entry is perturbed before the
/// comparison so the check is expected to fail.
pub fn run_gradcheck(seed: u64, corrupt: bool) -> Result<GradCheckRun, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=8usize);
    let dim = [8usize, 12, 16][rng.random_range(0..3usize)];
    let model = SelectionModel::new(ModelConfig::scaled(dim, 2), seed)?;
    let emb = Tensor2::from_fn(k, dim, |_, _| rng.random_range(-1.0..1.0));
    let seg: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ious: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
    let iops: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
    let report = gradient_check(&model, &emb, &seg, &ious, &iops, |store| {
        if corrupt {
            let id = store.ids().next().expect("model has parameters");
            let g = store.grad(id).clone();
            let mut bump = Tensor2::zeros(g.rows(), g.cols());
            bump.data_mut()[0] = 1e-2 * (1.0 + g.data()[0].abs());
            store.accumulate(id, &bump).expect("same shape");
        }
    })?;
    let passed = report.passes(GRADCHECK_TOLERANCE);
    Ok(GradCheckRun { seed, proposals: k, dim, corrupted: corrupt, report, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_runs_pass_and_corrupted_run_fails() {
        for seed in 0..3 {
            let run = run_gradcheck(seed, false).unwrap();
            assert!(run.passed, "seed {seed}: {:?}", run.report.worst());
            assert!((2..=8).contains(&run.proposals));
        }
        let bad = run_gradcheck(0, true).unwrap();
        assert!(!bad.passed);
    }
}
