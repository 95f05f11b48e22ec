use maskselect::mask::mask_pool;
use maskselect::metrics::{build_report, ciou, nciou, EvalSample};
use maskselect::model::{predict_mask, select, ModelConfig, SelectionModel, Strategy as Selector};
use maskselect::numerics::Tensor2;
use maskselect::proposals::{label_targets, postprocess, MaskProposal, PostprocessConfig, ProposalSet};
use maskselect::{union_masks, BinaryMask, FeatureGrid};
use proptest::prelude::{any, prop, prop_assert_eq, proptest, Strategy};

fn grid() -> FeatureGrid {
    // 4x4 cells over a 16x16 image: object A in the top-left quadrant,
    // object B in the bottom-right, background elsewhere.
    let mut values = Vec::new();
    for r in 0..4 {
        for c in 0..4 {
            let v = match (r < 2, c < 2, r >= 2 && c >= 2) {
                (true, true, _) => [1.0, 0.0, 0.0, 0.0],
                (_, _, true) => [0.0, 1.0, 0.0, 0.0],
                _ => [0.0, 0.0, 0.0, 1.0],
            };
            values.extend(v);
        }
    }
    FeatureGrid::new(4, 4, 4, values).unwrap()
}

fn proposal(mask: BinaryMask, score: f64) -> MaskProposal {
    MaskProposal { mask, predicted_iou: score, source_point: None }
}

#[test]
fn proposals_to_report() {
    let a = BinaryMask::rect(16, 16, 0, 0, 8, 8);
    let b = BinaryMask::rect(16, 16, 8, 8, 16, 16);
    let set = ProposalSet::new(
        "img",
        16,
        16,
        vec![
            proposal(a.clone(), 0.95),
            proposal(b.clone(), 0.9),
            proposal(a.clone(), 0.92),
            proposal(BinaryMask::rect(16, 16, 0, 8, 4, 16), 0.3),
        ],
    )
    .unwrap();
    let kept = postprocess(&set, &PostprocessConfig { iou_filter: 0.5, nms_threshold: 0.7, max_proposals: 64 });
    assert_eq!(kept.proposals.iter().map(|p| p.predicted_iou).collect::<Vec<_>>(), vec![0.95, 0.9]);

    let features = grid();
    let rows: Vec<Vec<f64>> = kept.proposals.iter().map(|p| mask_pool(&features, &p.mask).unwrap().vector).collect();
    assert_eq!(rows[0], vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(rows[1], vec![0.0, 1.0, 0.0, 0.0]);
    let embeddings = Tensor2::from_rows(&rows).unwrap();

    let model = SelectionModel::new(ModelConfig::scaled(4, 2), 1).unwrap();
    let output = model.predict(&embeddings, &[0.0, 1.0, 0.0, 0.0]).unwrap();
    assert_eq!(output.len(), 2);
    assert!(output.iop_predictions.iter().all(|p| *p > 0.0 && *p < 1.0));

    let targets = label_targets(&kept, &b).unwrap();
    assert_eq!(targets.ious, vec![0.0, 1.0]);
    let chosen = select(Selector::GtTop1, &output, 0.5, Some(&targets.ious)).unwrap();
    assert_eq!(chosen, vec![1]);
    let pred = predict_mask(&kept, &chosen).unwrap();
    let report = build_report(&[EvalSample::new("img", pred, b).unwrap()], 32).unwrap();
    assert_eq!((report.giou, report.ciou, report.nciou), (1.0, 1.0, 1.0));
}

fn mask_strategy(h: usize, w: usize) -> impl Strategy<Value = BinaryMask> {
    prop::collection::vec(any::<bool>(), h * w).prop_map(move |bits| BinaryMask::from_bools(h, w, &bits).unwrap())
}

proptest! {
    #[test]
    fn prediction_is_union_of_selection(
        masks in prop::collection::vec(mask_strategy(6, 5), 1..8),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..8),
    ) {
        let set = ProposalSet::new("p", 6, 5, masks.iter().cloned().map(|m| proposal(m, 0.5)).collect()).unwrap();
        let mut selected: Vec<usize> = picks.iter().map(|i| i.index(masks.len())).collect();
        selected.sort_unstable();
        selected.dedup();
        let pred = predict_mask(&set, &selected).unwrap();
        let want = if selected.is_empty() {
            BinaryMask::zeros(6, 5)
        } else {
            union_masks(selected.iter().map(|&i| &masks[i])).unwrap()
        };
        prop_assert_eq!(pred, want);
    }

    #[test]
    fn nciou_at_native_size_equals_ciou(pairs in prop::collection::vec((mask_strategy(7, 7), mask_strategy(7, 7)), 1..10)) {
        let samples: Vec<EvalSample> =
            pairs.into_iter().enumerate().map(|(i, (p, g))| EvalSample::new(format!("s{i}"), p, g).unwrap()).collect();
        prop_assert_eq!(nciou(&samples, 7).unwrap(), ciou(&samples).unwrap());
    }
}
