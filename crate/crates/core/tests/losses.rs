use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stablabel::distill::{
    batch_losses, bce_loss, boundary_loss, dice_loss, loss_gradients, lr_at, total_loss, DistillSample, LossParams,
    ScheduleParams,
};
use stablabel::tensor_io::MaskGrid;

fn grid(w: usize, h: usize) -> impl Strategy<Value = MaskGrid> {
    prop::collection::vec(0.0..=1.0f64, w * h).prop_map(move |v| MaskGrid::new(w, h, v).unwrap())
}

fn pair() -> impl Strategy<Value = (MaskGrid, MaskGrid)> {
    (3usize..12, 3usize..12).prop_flat_map(|(w, h)| (grid(w, h), grid(w, h)))
}

fn reflect101(i: isize, n: isize) -> usize {
    let i = if i < 0 { -i } else { i };
    (if i >= n { 2 * n - 2 - i } else { i }) as usize
}

#[allow(clippy::needless_range_loop)]
/// Sobel magnitudes by direct 3x3 correlation with the textbook kernels.
fn sobel_oracle(m: &MaskGrid) -> Vec<f64> {
    const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let (w, h) = (m.width as isize, m.height as isize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (mut gx, mut gy) = (0.0, 0.0);
            for ky in 0..3 {
                for kx in 0..3 {
                    let v = m.values[reflect101(y + ky as isize - 1, h) * m.width + reflect101(x + kx as isize - 1, w)];
                    gx += KX[ky][kx] * v;
                    gy += KX[kx][ky] * v;
                }
            }
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

fn flip(m: &MaskGrid) -> MaskGrid {
    let mut out = m.clone();
    for y in 0..m.height {
        for x in 0..m.width {
            out.set(m.width - 1 - x, y, m.get(x, y));
        }
    }
    out
}

proptest! {
    #[test]
    fn loss_ranges((p, t) in pair()) {
        let params = LossParams::default();
        let dice = dice_loss(&p, &t, &params).unwrap();
        prop_assert!((0.0..1.0).contains(&dice));
        prop_assert!(bce_loss(&p, &t, &params).unwrap() >= 0.0);
        prop_assert!(boundary_loss(&p, &t).unwrap() >= 0.0);
    }

    #[test]
    fn bce_matches_scalar_loop((p, t) in pair()) {
        let eps = 1e-7;
        let mut sum = 0.0;
        for (&pi, &ti) in p.values.iter().zip(&t.values) {
            let c = pi.max(eps).min(1.0 - eps);
            sum -= ti * c.ln() + (1.0 - ti) * (1.0 - c).ln();
        }
        let want = sum / p.values.len() as f64;
        prop_assert!((bce_loss(&p, &t, &LossParams::default()).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn boundary_matches_correlation_oracle((p, t) in pair()) {
        let (mp, mt) = (sobel_oracle(&p), sobel_oracle(&t));
        let want = mp.iter().zip(&mt).map(|(a, b)| (a - b).abs()).sum::<f64>() / mp.len() as f64;
        prop_assert!((boundary_loss(&p, &t).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn losses_commute_with_pixel_permutation((p, t) in pair(), seed in any::<u64>()) {
        let params = LossParams::default();
        let mut order: Vec<usize> = (0..p.values.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let perm = |m: &MaskGrid| MaskGrid::new(m.width, m.height, order.iter().map(|&i| m.values[i]).collect()).unwrap();
        let (pp, tp) = (perm(&p), perm(&t));
        prop_assert!((bce_loss(&p, &t, &params).unwrap() - bce_loss(&pp, &tp, &params).unwrap()).abs() < 1e-12);
        prop_assert!((dice_loss(&p, &t, &params).unwrap() - dice_loss(&pp, &tp, &params).unwrap()).abs() < 1e-12);
        prop_assert!((boundary_loss(&p, &t).unwrap() - boundary_loss(&flip(&p), &flip(&t)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn lr_stays_in_range(epoch in 0.0..=40.0f64) {
        let p = ScheduleParams::default();
        let lr = lr_at(epoch, &p).unwrap();
        prop_assert!((0.0..=p.peak_lr).contains(&lr));
        if epoch >= p.warmup_epochs {
            prop_assert!(lr >= p.min_lr);
        }
    }
}

#[test]
fn boundary_step_edges() {
    let step = |col: usize| {
        let mut m = MaskGrid::zeros(64, 64);
        for y in 0..64 {
            for x in col..64 {
                m.set(x, y, 1.0);
            }
        }
        m
    };
    let (p, t) = (step(32), step(40));
    let (mp, mt) = (sobel_oracle(&p), sobel_oracle(&t));
    let want = mp.iter().zip(&mt).map(|(a, b)| (a - b).abs()).sum::<f64>() / 4096.0;
    let got = boundary_loss(&p, &t).unwrap();
    assert!(got > 0.0);
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn schedule_midpoint_and_segment_ends() {
    let p = ScheduleParams::default();
    assert!((lr_at(12.5, &p).unwrap() - 1.005e-4).abs() < 1e-15);
    assert!((lr_at(20.0 - 1e-9, &p).unwrap() - p.min_lr).abs() < 1e-12);
    assert!(lr_at(40.0 + 1e-9, &p).is_err());
    assert!(lr_at(-1e-9, &p).is_err());
}

#[test]
fn perfect_prediction_gradient() {
    let params = LossParams::default();
    // a perfect binary match sits on the [0,1] boundary: BCE and score are
    // clamped, boundary ties give zero, and only dice keeps 0.3 / (2|T| + 1)
    for (size, b) in [(8, [2.0, 2.0, 6.0, 7.0]), (64, [10.0, 12.0, 42.0, 44.0])] {
        let t = MaskGrid::from_box(size, size, &stablabel::geometry::BBox::try_from(b).unwrap());
        let area = t.foreground_count() as f64;
        let s = DistillSample::new(t.clone(), &t, 1.0, 1.0).unwrap();
        let g = loss_gradients(&s, &params).unwrap();
        assert!((g.max_abs() - 0.3 / (2.0 * area + 1.0)).abs() < 1e-15);
        assert!(total_loss(&s, &params).unwrap().total < 1e-5);
        if size == 64 {
            assert!(g.max_abs() < 1e-3);
        }
    }
}

#[test]
fn batch_totals_are_bit_stable_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples: Vec<DistillSample> = (0..37)
        .map(|_| {
            let s = MaskGrid::new(8, 8, (0..64).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            let t = MaskGrid::new(8, 8, (0..64).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            DistillSample::new(s, &t, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)).unwrap()
        })
        .collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| batch_losses(&samples, &LossParams::default()).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.1.total.to_bits(), b.1.total.to_bits());
    assert_eq!(a.0, b.0);
}
