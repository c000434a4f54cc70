use proptest::prelude::*;
use stablabel::geometry::{clamp_box, iou, nms, top_k, BBox, Candidate, FrameRef, Source};

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..90.0f64, 0.0..90.0f64, 0.5..40.0f64, 0.5..40.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn candidates(max: usize) -> impl Strategy<Value = Vec<Candidate>> {
    prop::collection::vec((bbox(), 0u8..=10), 0..max).prop_map(|v| {
        v.into_iter()
            .map(|(b, s)| Candidate::new(b, s as f64 / 10.0, Source::Current, 0).unwrap())
            .collect()
    })
}

/// Suppression by exhaustive comparison: walk every candidate in a stable
/// descending-score order and compare it against every survivor so far.
fn nms_oracle(cands: &[Candidate], thr: f64) -> Vec<Candidate> {
    let mut idx: Vec<usize> = (0..cands.len()).collect();
    idx.sort_by(|&a, &b| cands[b].score.partial_cmp(&cands[a].score).unwrap().then(a.cmp(&b)));
    let mut alive = vec![true; cands.len()];
    for (p, &i) in idx.iter().enumerate() {
        if !alive[i] {
            continue;
        }
        for &j in &idx[p + 1..] {
            if iou(&cands[i].bbox, &cands[j].bbox) >= thr {
                alive[j] = false;
            }
        }
    }
    idx.into_iter().filter(|&i| alive[i]).map(|i| cands[i].clone()).collect()
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let x = iou(&a, &b);
        prop_assert_eq!(x, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn enlarging_never_shrinks_intersection(a in bbox(), b in bbox(), grow in (0.0..5.0f64, 0.0..5.0f64, 0.0..5.0f64, 0.0..5.0f64)) {
        let big = BBox::new(b.x1 - grow.0, b.y1 - grow.1, b.x2 + grow.2, b.y2 + grow.3).unwrap();
        prop_assert!(a.intersection_area(&big) >= a.intersection_area(&b));
    }

    #[test]
    fn nms_matches_exhaustive_oracle(cands in candidates(20), thr in 0.1..1.0f64) {
        prop_assert_eq!(nms(&cands, thr), nms_oracle(&cands, thr));
    }

    #[test]
    fn nms_survivors_are_separated_and_low_score_append_is_inert(cands in candidates(20), extra in bbox(), thr in 0.1..1.0f64) {
        let kept = nms(&cands, thr);
        for (i, a) in kept.iter().enumerate() {
            prop_assert!(cands.contains(a));
            for b in &kept[i + 1..] {
                prop_assert!(iou(&a.bbox, &b.bbox) < thr);
            }
        }
        let mut more = cands.clone();
        more.push(Candidate::new(extra, 0.0, Source::Current, 0).unwrap());
        let kept_more = nms(&more, thr);
        prop_assert_eq!(&kept_more[..kept.len()], &kept[..]);
    }

    #[test]
    fn top_k_is_sorted_prefix(cands in candidates(30), k in 1usize..12, min in 0.0..1.0f64) {
        let out = top_k(&cands, k, min);
        prop_assert!(out.len() <= k);
        prop_assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(out.iter().all(|c| c.score >= min));
        let passing = cands.iter().filter(|c| c.score >= min).count();
        prop_assert_eq!(out.len(), passing.min(k));
    }

    #[test]
    fn clamped_boxes_lie_in_frame(b in (-50.0..150.0f64, -50.0..150.0f64, 0.5..80.0f64, 0.5..80.0f64)) {
        let frame = FrameRef::new("v", 0, 100, 80).unwrap();
        let raw = BBox::new(b.0, b.1, b.0 + b.2, b.1 + b.3).unwrap();
        if let Some(c) = clamp_box(&raw, &frame) {
            prop_assert!(c.x1 >= 0.0 && c.y1 >= 0.0 && c.x2 <= 100.0 && c.y2 <= 80.0);
            prop_assert!(c.area() > 0.0);
        } else {
            prop_assert!(raw.x2 <= 0.0 || raw.y2 <= 0.0 || raw.x1 >= 100.0 || raw.y1 >= 80.0);
        }
    }
}

#[test]
fn top_k_of_two_hundred() {
    let cands: Vec<Candidate> = (0..200)
        .map(|i| Candidate::new(BBox::new(0.0, 0.0, 1.0 + i as f64, 2.0).unwrap(), 0.5, Source::Detector, 0).unwrap())
        .collect();
    let out = top_k(&cands, 150, 0.0);
    assert_eq!(out.len(), 150);
    // equal scores keep insertion order
    assert_eq!(out[149].bbox.x2, 150.0);
}
