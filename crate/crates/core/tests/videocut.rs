use proptest::prelude::*;
use stablabel::extract::ScoredMask;
use stablabel::flow::FlowField;
use stablabel::geometry::BBox;
use stablabel::stabilize::FlowMap;
use stablabel::tensor_io::MaskGrid;
use stablabel::videocut::{associate_regions, run_videocut, VideoCutParams};

const W: usize = 40;
const H: usize = 30;

fn mask() -> impl Strategy<Value = ScoredMask> {
    (0usize..30, 0usize..20, 3usize..10, 3usize..10, 0.0..1.0f64).prop_map(|(x, y, w, h, score)| {
        let b = BBox::new(x as f64, y as f64, (x + w).min(W) as f64, (y + h).min(H) as f64).unwrap();
        ScoredMask {
            mask: MaskGrid::from_box(W, H, &b),
            score,
        }
    })
}

fn video() -> impl Strategy<Value = Vec<Vec<ScoredMask>>> {
    prop::collection::vec(prop::collection::vec(mask(), 0..4), 1..7)
}

fn flows(n: usize, speeds: &[(f64, f64)]) -> FlowMap {
    (1..n)
        .map(|t| {
            let (u, v) = speeds[t % speeds.len()];
            ((t - 1, t), FlowField::constant(W, H, u, v))
        })
        .collect()
}

proptest! {
    #[test]
    fn regions_partition_the_input(frames in video(), thr in 0.1..0.9f64) {
        let regions = associate_regions(&frames, thr).unwrap();
        let mut seen: Vec<(usize, usize)> = regions
            .iter()
            .flat_map(|r| r.frames.iter().map(|f| (f.frame, f.input_index)))
            .collect();
        seen.sort_unstable();
        let all: Vec<(usize, usize)> = frames
            .iter()
            .enumerate()
            .flat_map(|(t, ms)| (0..ms.len()).map(move |i| (t, i)))
            .collect();
        prop_assert_eq!(seen, all);
        for r in &regions {
            prop_assert!(r.frames.windows(2).all(|w| w[1].frame == w[0].frame + 1));
        }
    }

    #[test]
    fn background_removal_is_forward_only(frames in video(), speeds in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..4)) {
        let n = frames.len();
        let regions = run_videocut("v", &frames, &flows(n, &speeds), &VideoCutParams::default()).unwrap();
        for r in &regions {
            if let Some(first) = r.frames.iter().position(|f| f.removed) {
                prop_assert!(r.frames[first..].iter().all(|f| f.removed));
            }
            let surviving = r.surviving().count();
            prop_assert!(surviving <= r.frames.len());
        }
    }
}
