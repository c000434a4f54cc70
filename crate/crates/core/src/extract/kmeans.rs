//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Label per point in `[0, k)`; labels are compacted so every cluster is non-empty.
    pub labels: Vec<usize>,
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
}

/// Labels of a patch grid produced by clustering its embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchClustering {
    pub labels: Vec<usize>,
    pub k: usize,
    pub rows: usize,
    pub cols: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest live centroid; lower index wins ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>], alive: &[bool]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        if !alive[c] {
            continue;
        }
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Squared distances at or below this are round-off: `1e-12` of the mean
/// squared point norm.
fn roundoff_sq(points: &[Vec<f64>]) -> f64 {
    1e-12 * points.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / points.len() as f64
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let tiny = roundoff_sq(points);
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        // every point already sits on a seed
        if d2.iter().all(|&d| d <= tiny) {
            break;
        }
        let pick = {
            let mut target = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            // never re-pick a point already on a seed through rounding
            if d2[idx] <= tiny {
                idx = (0..n).rev().find(|&i| d2[i] > tiny).unwrap_or(idx);
            }
            idx
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Clusters `points` (rows of equal length) into at most `k` groups.
///
/// Deterministic for a fixed seed. Seeding stops early when fewer than `k`
/// distinct points exist. An empty cluster is re-seeded at the point
/// farthest from its centroid, or retired when every point sits on one;
/// empty clusters are dropped from the returned labelling.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.len();
    if n == 0 || k == 0 || k > n {
        return Err(Error::Invalid(format!("k-means needs 1 <= k <= n, got k={k}, n={n}")));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch("k-means rows must share a positive length".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let k = centroids.len();
    let tiny = roundoff_sq(points);
    let mut alive = vec![true; k];
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut inertia_log: Vec<f64> = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, dist) = nearest(p, &centroids, &alive);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = dist;
            inertia += dist;
        }
        if let Some(&prev) = inertia_log.last() {
            assert!(
                inertia <= prev + 1e-9 * prev.abs().max(1.0),
                "k-means inertia increased from {prev} to {inertia}"
            );
        }
        inertia_log.push(inertia);
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s * inv).collect();
            } else if alive[c] {
                // repair: farthest point from its own centroid, lowest index on ties
                let mut far = None;
                for i in 0..n {
                    if taken[i] {
                        continue;
                    }
                    if far.is_none_or(|f: usize| dists[i] > dists[f]) {
                        far = Some(i);
                    }
                }
                match far {
                    Some(f) if dists[f] > tiny => {
                        taken[f] = true;
                        centroids[c] = points[f].clone();
                    }
                    _ => alive[c] = false,
                }
            }
        }
    }

    // compact away clusters that ended empty
    let mut remap = vec![usize::MAX; k];
    let mut kept = Vec::new();
    for &l in &labels {
        if remap[l] == usize::MAX {
            remap[l] = usize::MAX - 1;
        }
    }
    for c in 0..k {
        if remap[c] != usize::MAX {
            remap[c] = kept.len();
            kept.push(centroids[c].clone());
        }
    }
    let labels = labels.iter().map(|&l| remap[l]).collect();
    Ok(KMeansResult {
        labels,
        k: kept.len(),
        centroids: kept,
        inertia: inertia_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn final_inertia(points: &[Vec<f64>], r: &KMeansResult) -> f64 {
        points
            .iter()
            .zip(&r.labels)
            .map(|(p, &l)| sq_dist(p, &r.centroids[l]))
            .sum()
    }

    #[test]
    fn k_equals_n() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let r = kmeans(&pts, 6, 3).unwrap();
        assert_eq!(r.k, 6);
        let mut labels = r.labels.clone();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 6);
        assert_eq!(final_inertia(&pts, &r), 0.0);
    }

    #[test]
    fn separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let centers = [[0.0, 0.0], [100.0, -50.0]];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..60 {
            let c = centers[i % 2];
            pts.push(vec![c[0] + rng.random_range(-1.0..1.0), c[1] + rng.random_range(-1.0..1.0)]);
            // nearest true center oracle
            let d0 = sq_dist(pts.last().unwrap(), &centers[0]);
            let d1 = sq_dist(pts.last().unwrap(), &centers[1]);
            truth.push(if d0 < d1 { 0 } else { 1 });
        }
        let r = kmeans(&pts, 2, 0).unwrap();
        let flip = r.labels[0] != truth[0];
        for (l, t) in r.labels.iter().zip(&truth) {
            assert_eq!(*l, if flip { 1 - t } else { *t });
        }
    }

    #[test]
    fn identical_points_share_label() {
        let pts = vec![vec![2.0, 2.0]; 9];
        let r = kmeans(&pts, 2, 5).unwrap();
        assert_eq!(r.k, 1);
        assert!(r.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn deterministic_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let a = kmeans(&pts, 5, 42).unwrap();
        let b = kmeans(&pts, 5, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.inertia.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kmeans(&[vec![1.0]], 2, 0).is_err());
        assert!(kmeans(&[vec![1.0]], 0, 0).is_err());
    }
}
