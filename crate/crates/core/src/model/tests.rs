use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::gelu;

fn small_config(dim: usize, heads: usize) -> ModelConfig {
    ModelConfig { tau: 0.5, ..ModelConfig::scaled(dim, heads) }
}

fn random_inputs(rng: &mut ChaCha8Rng, k: usize, d: usize) -> (Tensor2, Vec<f64>, Vec<f64>, Vec<f64>) {
    let emb = Tensor2::from_fn(k, d, |_, _| rng.random_range(-1.0..1.0));
    let seg: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ious: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
    let iops: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
    (emb, seg, ious, iops)
}

fn zero_param(model: &mut SelectionModel, name: &str) {
    let id = model.params().id(name).unwrap_or_else(|| panic!("no parameter {name}"));
    model.params_mut().value_mut(id).data_mut().fill(0.0);
}

fn set_param(model: &mut SelectionModel, name: &str, t: Tensor2) {
    let id = model.params().id(name).unwrap();
    *model.params_mut().value_mut(id) = t;
}

/// Rowwise MLP by explicit loops over the stored parameter tensors.
fn mlp_oracle(model: &SelectionModel, prefix: &str, layers: usize, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for j in 0..layers {
        let w = model.params().value(model.params().id(&format!("{prefix}.{j}.w")).unwrap());
        let b = model.params().value(model.params().id(&format!("{prefix}.{j}.b")).unwrap());
        let mut next = vec![0.0; w.cols()];
        for (o, out) in next.iter_mut().enumerate() {
            *out = b.get(0, o) + (0..w.rows()).map(|i| cur[i] * w.get(i, o)).sum::<f64>();
        }
        if j + 1 < layers {
            next.iter_mut().for_each(|v| *v = gelu(*v));
        }
        cur = next;
    }
    cur
}

#[test]
fn residual_identity_with_zero_output_projections() {
    let mut model = SelectionModel::new(small_config(8, 2), 3).unwrap();
    for i in 0..model.config().fusion_blocks {
        for name in ["attn.o.w", "attn.o.b", "mlp.1.w", "mlp.1.b"] {
            zero_param(&mut model, &format!("fusion.{i}.{name}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (emb, seg, _, _) = random_inputs(&mut rng, 3, 8);
    let (e2, s2) = model.fusion_forward(&emb, &seg).unwrap();
    assert_eq!(e2, emb);
    assert_eq!(s2, seg);
}

#[test]
fn permutation_equivariance() {
    let model = SelectionModel::new(small_config(8, 2), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (emb, seg, _, _) = random_inputs(&mut rng, 5, 8);
    let perm = [3usize, 0, 4, 1, 2];
    let permuted = Tensor2::from_fn(5, 8, |r, c| emb.get(perm[r], c));
    let a = model.predict(&emb, &seg).unwrap();
    let b = model.predict(&permuted, &seg).unwrap();
    for (r, &p) in perm.iter().enumerate() {
        assert!((b.similarities[r] - a.similarities[p]).abs() < 1e-12);
        assert!((b.iop_predictions[r] - a.iop_predictions[p]).abs() < 1e-12);
    }
    let picked_a = select_top1_iou(&a);
    let picked_b = select_top1_iou(&b);
    assert_eq!(picked_a, picked_b.iter().map(|&r| perm[r]).collect::<Vec<_>>());
}

#[test]
fn duplicated_rows_get_identical_outputs() {
    let model = SelectionModel::new(small_config(8, 2), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (single, seg, _, _) = random_inputs(&mut rng, 1, 8);
    let doubled = Tensor2::vstack(&single, &single).unwrap();
    let (e, _) = model.fusion_forward(&doubled, &seg).unwrap();
    assert_eq!(e.row(0), e.row(1));
    let out = model.predict(&doubled, &seg).unwrap();
    assert_eq!(out.similarities[0], out.similarities[1]);
    assert_eq!(out.iop_predictions[0], out.iop_predictions[1]);
}

#[test]
fn iou_head_dot_product_geometry() {
    let cfg = ModelConfig { iou_head_dims: vec![4], ..ModelConfig::scaled(4, 2) };
    let mut model = SelectionModel::new(cfg, 0).unwrap();
    set_param(&mut model, "iou_head.0.w", Tensor2::identity(4));
    let e = [1.0, 2.0, 0.0, 0.0];
    let emb = Tensor2::from_rows(&[e.to_vec(), vec![0.0, 0.0, 3.0, 0.0], vec![0.0, 0.0, 0.0, -1.0]]).unwrap();
    let sims = model.iou_head(&emb, &e).unwrap();
    assert_eq!(sims, vec![5.0, 0.0, 0.0]);
}

#[test]
fn heads_match_explicit_recomputation() {
    let model = SelectionModel::new(small_config(8, 2), 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (emb, seg, _, _) = random_inputs(&mut rng, 4, 8);
    let sims = model.iou_head(&emb, &seg).unwrap();
    let iops = model.iop_head(&emb).unwrap();
    for k in 0..4 {
        let proj = mlp_oracle(&model, "iou_head", 3, emb.row(k));
        let sim: f64 = proj.iter().zip(&seg).map(|(a, b)| a * b).sum();
        assert!((sims[k] - sim).abs() < 1e-12);
        let logit = mlp_oracle(&model, "iop_head", 3, emb.row(k))[0];
        assert!((iops[k] - 1.0 / (1.0 + (-logit).exp())).abs() < 1e-12);
    }
}

#[test]
fn zero_final_iop_layer_predicts_half() {
    let mut model = SelectionModel::new(small_config(8, 2), 1).unwrap();
    zero_param(&mut model, "iop_head.2.w");
    zero_param(&mut model, "iop_head.2.b");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (emb, seg, _, _) = random_inputs(&mut rng, 3, 8);
    assert_eq!(model.predict(&emb, &seg).unwrap().iop_predictions, vec![0.5; 3]);
}

#[test]
fn empty_and_mismatched_inputs() {
    let model = SelectionModel::new(small_config(8, 2), 1).unwrap();
    assert_eq!(model.predict(&Tensor2::zeros(0, 8), &[0.0; 8]).unwrap(), SelectionOutput::empty());
    assert!(matches!(model.fusion_forward(&Tensor2::zeros(0, 8), &[0.0; 8]), Err(ModelError::EmptyProposalSet)));
    assert!(matches!(model.predict(&Tensor2::zeros(2, 8), &[0.0; 7]), Err(ModelError::LengthMismatch(_))));
}

#[test]
fn same_seed_same_parameters() {
    let a = SelectionModel::new(small_config(8, 2), 42).unwrap();
    let b = SelectionModel::new(small_config(8, 2), 42).unwrap();
    let c = SelectionModel::new(small_config(8, 2), 43).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn full_model_gradient_check_k4_d8() {
    for seed in 0..3 {
        let model = SelectionModel::new(small_config(8, 2), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (emb, seg, ious, iops) = random_inputs(&mut rng, 4, 8);
        let report = gradient_check(&model, &emb, &seg, &ious, &iops, |_| {}).unwrap();
        assert_eq!(report.blocks.len(), model.params().len() + 2);
        let worst = report.worst().unwrap();
        assert!(report.passes(1e-4), "seed {seed}: {} at {:.3e}", worst.name, worst.max_relative_error);
    }
}

#[test]
fn gradient_check_flags_tampered_gradient() {
    let model = SelectionModel::new(small_config(8, 2), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (emb, seg, ious, iops) = random_inputs(&mut rng, 4, 8);
    let report = gradient_check(&model, &emb, &seg, &ious, &iops, |store| {
        let id = store.id("fusion.0.attn.v.w").unwrap();
        let g = store.grad(id).clone();
        store.accumulate(id, &g).unwrap();
    })
    .unwrap();
    assert!(!report.passes(1e-4));
    assert_eq!(report.worst().unwrap().name, "fusion.0.attn.v.w");
}

#[test]
fn default_temperature_gradient_check() {
    let model = SelectionModel::new(ModelConfig::scaled(8, 2), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (emb, seg, ious, iops) = random_inputs(&mut rng, 6, 8);
    let report = gradient_check(&model, &emb, &seg, &ious, &iops, |_| {}).unwrap();
    let worst = report.worst().unwrap();
    assert!(report.passes(1e-4), "{} at {:.3e}", worst.name, worst.max_relative_error);
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let model = SelectionModel::new(small_config(8, 2), 13).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &model).unwrap();
    let loaded = read_checkpoint(&mut buf.as_slice()).unwrap();
    assert_eq!(loaded.config(), model.config());
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let k = rng.random_range(1..6);
        let (emb, seg, _, _) = random_inputs(&mut rng, k, 8);
        assert_eq!(model.predict(&emb, &seg).unwrap(), loaded.predict(&emb, &seg).unwrap());
    }
    let mut again = Vec::new();
    write_checkpoint(&mut again, &loaded).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.msel");
    let model = SelectionModel::new(small_config(8, 2), 2).unwrap();
    save_checkpoint(&path, &model).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap().params(), model.params());
}

#[test]
fn checkpoint_errors() {
    let model = SelectionModel::new(small_config(8, 2), 13).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &model).unwrap();

    let mut bad_magic = buf.clone();
    bad_magic[0] = b'X';
    assert!(matches!(read_checkpoint(&mut bad_magic.as_slice()), Err(ModelError::Parse(_))));

    let mut bad_version = buf.clone();
    bad_version[4] = 9;
    assert!(matches!(
        read_checkpoint(&mut bad_version.as_slice()),
        Err(ModelError::VersionMismatch { expected: 1, found: 9 })
    ));

    let truncated = &buf[..buf.len() - 3];
    assert!(matches!(read_checkpoint(&mut &truncated[..]), Err(ModelError::Parse(FormatError::Truncated))));

    // Rewrite the config block with a different model_dim but keep the tensors.
    let json_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let other = serde_json::to_vec(&small_config(16, 2)).unwrap();
    let mut edited = buf[..8].to_vec();
    edited.extend_from_slice(&(other.len() as u32).to_le_bytes());
    edited.extend_from_slice(&other);
    edited.extend_from_slice(&buf[12 + json_len..]);
    assert!(matches!(read_checkpoint(&mut edited.as_slice()), Err(ModelError::ShapeMismatch(_))));
}

#[test]
fn seg_token_round_trip() {
    let seg = vec![0.25, -1.5, 3.0];
    let mut buf = Vec::new();
    write_seg_token(&mut buf, &seg).unwrap();
    assert_eq!(&buf[..4], b"SEGV");
    assert_eq!(read_seg_token(&mut buf.as_slice()).unwrap(), seg);
    buf[0] = b'Z';
    assert!(read_seg_token(&mut buf.as_slice()).is_err());
}

#[test]
fn backward_accumulates_across_calls() {
    let mut model = SelectionModel::new(small_config(8, 2), 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (emb, seg, ious, iops) = random_inputs(&mut rng, 3, 8);
    model.loss_and_backward(&emb, &seg, &ious, &iops).unwrap();
    let once: Vec<Tensor2> = model.params().ids().map(|id| model.params().grad(id).clone()).collect();
    model.loss_and_backward(&emb, &seg, &ious, &iops).unwrap();
    for (id, g1) in model.params().ids().zip(&once) {
        let g2 = model.params().grad(id);
        for (a, b) in g2.data().iter().zip(g1.data()) {
            assert!((a - 2.0 * b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}
