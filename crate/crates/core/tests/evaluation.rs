use proptest::prelude::*;
use stablabel::eval::{
    average_precision, average_recall, center_jitter, evaluate, match_detections, top_k_sweep, Detection, EvalFrame,
    GtObject,
};
use stablabel::geometry::{iou, BBox};

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..60.0f64, 0.0..60.0f64, 4.0..30.0f64, 4.0..30.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn frame() -> impl Strategy<Value = EvalFrame> {
    (
        prop::collection::vec((bbox(), 0.0..1.0f64), 0..10),
        prop::collection::vec(bbox(), 0..5),
    )
        .prop_map(|(preds, gts)| EvalFrame {
            preds: preds
                .into_iter()
                .map(|(bbox, score)| Detection { bbox, score, mask: None })
                .collect(),
            gts: gts
                .into_iter()
                .enumerate()
                .map(|(id, bbox)| GtObject { id, bbox, mask: None })
                .collect(),
        })
}

/// For each prediction in order, scan every ground truth and take the best
/// still-free one at or above the threshold.
fn greedy_oracle(preds: &[BBox], gts: &[BBox], thr: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; gts.len()];
    preds
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                let v = iou(p, g);
                if !taken[j] && v >= thr && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            best.map(|(j, _)| {
                taken[j] = true;
                j
            })
        })
        .collect()
}

proptest! {
    #[test]
    fn matching_agrees_with_greedy_oracle(
        preds in prop::collection::vec(bbox(), 0..10),
        gts in prop::collection::vec(bbox(), 0..10),
        thr in 0.1..0.9f64,
    ) {
        prop_assert_eq!(match_detections(&preds, &gts, thr), greedy_oracle(&preds, &gts, thr));
    }

    #[test]
    fn rates_are_bounded_and_recall_monotone(frames in prop::collection::vec(frame(), 1..6)) {
        for thr in [0.5, 0.75] {
            if let Some(ap) = average_precision(&frames, thr, 100) {
                prop_assert!((0.0..=1.0).contains(&ap));
            }
        }
        let sweep = top_k_sweep(&frames, &[1, 2, 3, 5, 8, 100]);
        let ars: Vec<f64> = sweep.iter().filter_map(|(_, ar)| *ar).collect();
        prop_assert!(ars.iter().all(|a| (0.0..=1.0).contains(a)));
        prop_assert!(ars.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn duplicating_unambiguous_predictions_never_raises_ap(frames in prop::collection::vec(frame(), 1..5)) {
        let doubled: Vec<EvalFrame> = frames
            .iter()
            .map(|f| EvalFrame {
                preds: f.preds.iter().flat_map(|p| [p.clone(), p.clone()]).collect(),
                gts: f.gts.clone(),
            })
            .collect();
        for thr in [0.5, 0.7] {
            // a duplicate may legitimately claim a second ground truth
            let ambiguous = frames.iter().any(|f| {
                f.preds.iter().any(|p| f.gts.iter().filter(|g| iou(&p.bbox, &g.bbox) >= thr).count() > 1)
            });
            if ambiguous {
                continue;
            }
            if let (Some(a), Some(b)) = (average_precision(&frames, thr, 100), average_precision(&doubled, thr, 100)) {
                prop_assert!(b <= a + 1e-12, "{} -> {}", a, b);
            }
        }
    }

    #[test]
    fn metrics_ignore_frame_order(frames in prop::collection::vec(frame(), 1..6)) {
        let mut reversed = frames.clone();
        reversed.reverse();
        let a = evaluate(&[frames]);
        let b = evaluate(&[reversed]);
        prop_assert_eq!(a.ap50, b.ap50);
        prop_assert_eq!(a.ar, b.ar);
        prop_assert_eq!(a.miou, b.miou);
    }

    #[test]
    fn jitter_ignores_constant_offset(
        track in prop::collection::vec(bbox(), 2..12),
        offset in (-10.0..10.0f64, -10.0..10.0f64),
    ) {
        let gt: Vec<BBox> = track.iter().map(|b| b.translate(0.5, -0.25)).collect();
        let shifted: Vec<BBox> = track.iter().map(|b| b.translate(offset.0, offset.1)).collect();
        let a = center_jitter(&track, &gt).unwrap();
        let b = center_jitter(&shifted, &gt).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn exact_predictions_give_full_recall() {
    let gts: Vec<GtObject> = [[0.0, 0.0, 10.0, 10.0], [20.0, 5.0, 40.0, 30.0]]
        .iter()
        .enumerate()
        .map(|(id, b)| GtObject {
            id,
            bbox: BBox::try_from(*b).unwrap(),
            mask: None,
        })
        .collect();
    let frame = EvalFrame {
        preds: gts
            .iter()
            .map(|g| Detection {
                bbox: g.bbox,
                score: 0.9,
                mask: None,
            })
            .collect(),
        gts,
    };
    assert_eq!(average_recall(std::slice::from_ref(&frame), 100), Some(1.0));
    assert_eq!(average_precision(std::slice::from_ref(&frame), 0.95, 100), Some(1.0));
    let empty = EvalFrame {
        preds: vec![],
        gts: frame.gts.clone(),
    };
    assert_eq!(average_recall(&[empty], 100), Some(0.0));
}
