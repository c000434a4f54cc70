use super::affinity::AffinityMatrix;
use super::kmeans::PatchClustering;
use crate::geometry::{clamp_box, BBox, Candidate, FrameRef, Source};
use crate::tensor_io::MaskGrid;

/// A 4-connected run of same-label patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchComponent {
    pub label: usize,
    /// Patch indices (row-major), ascending.
    pub patches: Vec<usize>,
    pub row_range: (usize, usize),
    pub col_range: (usize, usize),
}

impl PatchComponent {
    /// Number of grid corners the component occupies.
    pub fn corner_count(&self, rows: usize, cols: usize) -> usize {
        [0, cols - 1, (rows - 1) * cols, rows * cols - 1]
            .iter()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .filter(|c| self.patches.binary_search(c).is_ok())
            .count()
    }

    /// Tight pixel rectangle of the member patches, clamped to the frame.
    pub fn bbox(&self, frame: &FrameRef, patch_size: usize) -> Option<BBox> {
        let ps = patch_size as f64;
        let raw = BBox {
            x1: self.col_range.0 as f64 * ps,
            y1: self.row_range.0 as f64 * ps,
            x2: (self.col_range.1 + 1) as f64 * ps,
            y2: (self.row_range.1 + 1) as f64 * ps,
        };
        clamp_box(&raw, frame)
    }

    /// Mean affinity over distinct member pairs; 1 for a single patch.
    pub fn mean_affinity(&self, a: &AffinityMatrix) -> f64 {
        let m = self.patches.len();
        if m < 2 {
            return 1.0;
        }
        let mut sum = 0.0;
        for (x, &i) in self.patches.iter().enumerate() {
            for &j in &self.patches[x + 1..] {
                sum += a.get(i, j);
            }
        }
        sum / (m * (m - 1) / 2) as f64
    }

    /// Member patches painted at frame resolution.
    pub fn mask(&self, frame: &FrameRef, cols: usize, patch_size: usize) -> MaskGrid {
        let mut m = MaskGrid::zeros(frame.width, frame.height);
        for &p in &self.patches {
            let (r, c) = (p / cols, p % cols);
            for y in (r * patch_size)..((r + 1) * patch_size).min(frame.height) {
                for x in (c * patch_size)..((c + 1) * patch_size).min(frame.width) {
                    m.set(x, y, 1.0);
                }
            }
        }
        m
    }
}

/// Splits every cluster into 4-connected components, in order of each
/// component's first patch.
pub fn connected_components(clustering: &PatchClustering) -> Vec<PatchComponent> {
    let (rows, cols) = (clustering.rows, clustering.cols);
    let mut seen = vec![false; rows * cols];
    let mut out = Vec::new();
    for start in 0..rows * cols {
        if seen[start] {
            continue;
        }
        let label = clustering.labels[start];
        let mut patches = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(p) = stack.pop() {
            patches.push(p);
            let (r, c) = (p / cols, p % cols);
            let mut visit = |q: usize| {
                if !seen[q] && clustering.labels[q] == label {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if r > 0 {
                visit(p - cols);
            }
            if r + 1 < rows {
                visit(p + cols);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < cols {
                visit(p + 1);
            }
        }
        patches.sort_unstable();
        let rmin = patches.iter().map(|p| p / cols).min().unwrap();
        let rmax = patches.iter().map(|p| p / cols).max().unwrap();
        let cmin = patches.iter().map(|p| p % cols).min().unwrap();
        let cmax = patches.iter().map(|p| p % cols).max().unwrap();
        out.push(PatchComponent {
            label,
            patches,
            row_range: (rmin, rmax),
            col_range: (cmin, cmax),
        });
    }
    out
}

/// Components with at least `min_patches` patches as scored candidates.
pub fn clusters_to_candidates(
    clustering: &PatchClustering,
    affinity: &AffinityMatrix,
    frame: &FrameRef,
    patch_size: usize,
    min_patches: usize,
) -> Vec<Candidate> {
    connected_components(clustering)
        .into_iter()
        .filter(|c| c.patches.len() >= min_patches)
        .filter_map(|c| {
            let bbox = c.bbox(frame, patch_size)?;
            Some(Candidate {
                bbox,
                score: c.mean_affinity(affinity).clamp(0.0, 1.0),
                source: Source::Current,
                frame: frame.index,
            })
        })
        .collect()
}
