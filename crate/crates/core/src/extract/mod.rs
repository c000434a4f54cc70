//! Frame-level object candidates from precomputed patch features.
//!
//! Per backbone: cosine affinity graph, normalized-cut eigenvector, k-means
//! over `[eigenvector, feature]` embeddings, 4-connected components. The
//! component masks of all backbones are then consolidated by voting, boxed,
//! and filtered to the best `K`.

mod affinity;
mod components;
mod kmeans;
mod ncut;
mod vote;

pub use affinity::{build_affinity, normalized_features, AffinityMatrix};
pub use components::{clusters_to_candidates, connected_components, PatchComponent};
pub use kmeans::{kmeans, KMeansResult, PatchClustering, MAX_ITERATIONS};
pub use ncut::{ncut_second_eigenvector, NcutEigen};
pub use vote::{vote_groups, vote_masks, ScoredMask, VoteGroup};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, Candidate, Source};
use crate::tensor_io::{FeatureMap, MaskGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ExtractParams {
    /// k-means clusters per frame and backbone.
    pub clusters: usize,
    pub min_patches: usize,
    /// Weight of the (RMS-normalized) eigenvector column in the embedding.
    pub eigen_weight: f64,
    /// At or above this Laplacian eigenvalue (within solver round-off) the
    /// graph has no useful cut and the eigenvector column is zeroed.
    pub max_cut_eigenvalue: f64,
    /// Components occupying at least this many grid corners are background.
    pub background_corners: usize,
    pub vote_iou: f64,
    pub vote_tau: f64,
    pub top_k: usize,
    pub min_score: f64,
    pub nms_iou: Option<f64>,
    pub seed: u64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            clusters: 4,
            min_patches: 2,
            eigen_weight: 1.0,
            max_cut_eigenvalue: 1.0,
            background_corners: 2,
            vote_iou: 0.6,
            vote_tau: 0.5,
            top_k: 150,
            min_score: 0.0,
            nms_iou: None,
            seed: 0,
        }
    }
}

impl ExtractParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Invalid(format!("extract params: {name} {v} outside (0,1]")))
            }
        };
        if self.clusters == 0 || self.top_k == 0 || self.min_patches == 0 {
            return Err(Error::Invalid(
                "extract params: clusters, top-k and min-patches must be >= 1".into(),
            ));
        }
        unit("vote-iou", self.vote_iou)?;
        if !(0.0..1.0).contains(&self.vote_tau) {
            return Err(Error::Invalid(format!(
                "extract params: vote-tau {} outside [0,1)",
                self.vote_tau
            )));
        }
        if let Some(t) = self.nms_iou {
            unit("nms-iou", t)?;
        }
        Ok(())
    }
}

/// A candidate box with the voted mask it was boxed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedCandidate {
    pub candidate: Candidate,
    pub mask: MaskGrid,
}

/// k-means input rows: `[w * sqrt(N) * x_i, f_i / |f_i|]`.
pub fn patch_embeddings(
    features: &FeatureMap,
    eigen: &NcutEigen,
    params: &ExtractParams,
) -> Result<Vec<Vec<f64>>> {
    let unit = normalized_features(features)?;
    let n = unit.len() as f64;
    // a complete graph has lambda_2 = 1 with an (N-1)-fold eigenspace, so
    // its eigenvector is arbitrary
    let weight = if eigen.eigenvalue >= params.max_cut_eigenvalue - 1e-9 {
        0.0
    } else {
        params.eigen_weight * n.sqrt()
    };
    Ok(unit
        .into_iter()
        .zip(&eigen.vector)
        .map(|(f, &x)| {
            let mut row = Vec::with_capacity(f.len() + 1);
            row.push(weight * x);
            row.extend(f);
            row
        })
        .collect())
}

/// Clusters one backbone's patches.
pub fn cluster_patches(features: &FeatureMap, params: &ExtractParams) -> Result<(AffinityMatrix, PatchClustering)> {
    let affinity = build_affinity(features)?;
    let eigen = ncut_second_eigenvector(&affinity)?;
    let rows = patch_embeddings(features, &eigen, params)?;
    let k = params.clusters.min(rows.len());
    let km = kmeans(&rows, k, params.seed)?;
    Ok((
        affinity,
        PatchClustering {
            labels: km.labels,
            k: km.k,
            rows: features.rows,
            cols: features.cols,
        },
    ))
}

/// Foreground component masks of one backbone, scored by mean affinity.
pub fn backbone_masks(features: &FeatureMap, params: &ExtractParams) -> Result<Vec<ScoredMask>> {
    let (affinity, clustering) = cluster_patches(features, params)?;
    let frame = &features.frame;
    Ok(connected_components(&clustering)
        .into_iter()
        .filter(|c| c.patches.len() >= params.min_patches)
        .filter(|c| c.corner_count(features.rows, features.cols) < params.background_corners)
        .map(|c| ScoredMask {
            score: c.mean_affinity(&affinity).clamp(0.0, 1.0),
            mask: c.mask(frame, features.cols, features.patch_size),
        })
        .filter(|m| m.mask.foreground_count() > 0)
        .collect())
}

/// Full per-frame extraction across backbones.
pub fn extract_candidates(
    features: &[FeatureMap],
    params: &ExtractParams,
) -> Result<Vec<ExtractedCandidate>> {
    params.validate()?;
    let first = features
        .first()
        .ok_or_else(|| Error::Invalid("extraction needs at least one backbone".into()))?;
    let frame = &first.frame;
    let channels = first.channels;
    for f in features {
        if f.frame.width != frame.width || f.frame.height != frame.height {
            return Err(Error::DimensionMismatch(format!(
                "backbone {} frame {}x{} differs from {}x{}",
                f.backbone, f.frame.width, f.frame.height, frame.width, frame.height
            )));
        }
        if f.backbone == first.backbone && f.channels != channels {
            return Err(Error::DimensionMismatch(format!(
                "backbone {} has mixed channel counts",
                f.backbone
            )));
        }
    }

    let mut masks = Vec::new();
    for f in features {
        masks.extend(backbone_masks(f, params)?);
    }
    let mut voted = vote_masks(&masks, params.vote_iou, params.vote_tau);
    // stable: equal scores keep pivot order
    voted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut out: Vec<ExtractedCandidate> = Vec::new();
    for m in voted {
        if m.score < params.min_score {
            continue;
        }
        let Some(bbox) = m.mask.bounding_box() else {
            continue;
        };
        if let Some(t) = params.nms_iou {
            if out.iter().any(|k| iou(&k.candidate.bbox, &bbox) >= t) {
                continue;
            }
        }
        out.push(ExtractedCandidate {
            candidate: Candidate {
                bbox,
                score: m.score,
                source: Source::Current,
                frame: frame.index,
            },
            mask: m.mask,
        });
        if out.len() == params.top_k {
            break;
        }
    }
    Ok(out)
}
