//! Motion-guided box stabilization.
//!
//! For every target frame, the raw candidates of the neighboring frames are
//! translated into the target by the mean flow inside each box, grouped by
//! IoU into fused reference proposals, and used to filter and complete the
//! target's own candidates:
//!
//! - keep a current box when some fused box overlaps it with IoU >= `iou_keep`;
//! - add a fused box when no kept box overlaps it with IoU >= `iou_add`.
//!
//! References are always the unstabilized neighbors, so errors never chain
//! from one target frame into the next.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{mean_flow_in_box, warp_box, FlowField};
use crate::geometry::{clamp_box, iou, score_order, BBox, Candidate, FrameRef, Source};

/// Flow fields keyed by `(source frame, destination frame)`.
pub type FlowMap = HashMap<(usize, usize), FlowField>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionRule {
    /// Coordinate-wise min/max over the group.
    Enclosing,
    /// Coordinate-wise mean over the group.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct StabilizationParams {
    pub window_radius: usize,
    pub iou_group: f64,
    pub iou_keep: f64,
    pub iou_add: f64,
    pub min_group_size: usize,
    pub fusion: FusionRule,
}

impl Default for StabilizationParams {
    fn default() -> Self {
        StabilizationParams {
            window_radius: 3,
            iou_group: 0.7,
            iou_keep: 0.6,
            iou_add: 0.7,
            min_group_size: 3,
            fusion: FusionRule::Enclosing,
        }
    }
}

impl StabilizationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("iou-group", self.iou_group),
            ("iou-keep", self.iou_keep),
            ("iou-add", self.iou_add),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Invalid(format!(
                    "stabilization params: {name} {v} outside (0,1]"
                )));
            }
        }
        if self.window_radius < 1 || self.min_group_size < 1 {
            return Err(Error::Invalid(
                "stabilization params: window-radius and min-group-size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Neighbors of `target` within `radius`, truncated at the sequence ends.
pub fn reference_frames(target: usize, num_frames: usize, radius: usize) -> Vec<usize> {
    let lo = target.saturating_sub(radius);
    let hi = (target + radius).min(num_frames.saturating_sub(1));
    (lo..=hi).filter(|&t| t != target).collect()
}

/// Warps every reference candidate into the target frame.
///
/// The returned candidates are tagged [`Source::WarpedReference`] and keep
/// their origin frame in `frame`. They are ordered by origin frame, then by
/// position within that frame.
pub fn align_references(
    target: &FrameRef,
    candidates: &[Vec<Candidate>],
    flows: &FlowMap,
    params: &StabilizationParams,
) -> Result<Vec<Candidate>> {
    let t = target.index;
    let mut out = Vec::new();
    for r in reference_frames(t, candidates.len(), params.window_radius) {
        let flow = flows.get(&(r, t)).ok_or_else(|| Error::MissingFlow {
            video: target.video.clone(),
            src: r,
            dst: t,
        })?;
        for c in &candidates[r] {
            // boxes covering no pixel center carry no flow evidence
            let Ok(mean) = mean_flow_in_box(flow, &c.bbox) else {
                continue;
            };
            if let Some(bbox) = clamp_box(&warp_box(&c.bbox, mean), target) {
                out.push(Candidate {
                    bbox,
                    score: c.score,
                    source: Source::WarpedReference,
                    frame: r,
                });
            }
        }
    }
    Ok(out)
}

/// A merged group of warped references.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedBox {
    pub bbox: BBox,
    pub score: f64,
    /// Indices into the warped-reference list, pivot first.
    pub members: Vec<usize>,
}

impl FusedBox {
    pub fn group_size(&self) -> usize {
        self.members.len()
    }
}

/// Greedy IoU grouping of warped references into fused proposals.
pub fn fuse_references(warped: &[Candidate], params: &StabilizationParams) -> Vec<FusedBox> {
    let order = score_order(warped);
    let mut used = vec![false; warped.len()];
    let mut fused = Vec::new();
    for (pos, &pivot) in order.iter().enumerate() {
        if used[pivot] {
            continue;
        }
        used[pivot] = true;
        let mut members = vec![pivot];
        for &other in &order[pos + 1..] {
            if !used[other] && iou(&warped[pivot].bbox, &warped[other].bbox) >= params.iou_group {
                used[other] = true;
                members.push(other);
            }
        }
        if members.len() < params.min_group_size {
            continue;
        }
        let inv = 1.0 / members.len() as f64;
        let bbox = match params.fusion {
            FusionRule::Enclosing => members
                .iter()
                .skip(1)
                .fold(warped[pivot].bbox, |acc, &m| acc.union_box(&warped[m].bbox)),
            FusionRule::Mean => {
                let mut s = [0.0; 4];
                for &m in &members {
                    for (acc, v) in s.iter_mut().zip(warped[m].bbox.to_array()) {
                        *acc += v;
                    }
                }
                BBox {
                    x1: s[0] * inv,
                    y1: s[1] * inv,
                    x2: s[2] * inv,
                    y2: s[3] * inv,
                }
            }
        };
        let score = members.iter().map(|&m| warped[m].score).sum::<f64>() * inv;
        fused.push(FusedBox {
            bbox,
            score,
            members,
        });
    }
    fused
}

/// Applies the keep/add rules to one frame's candidates.
///
/// Kept current boxes come first in their original order, followed by the
/// added fused boxes by descending score. With no fused boxes the current
/// candidates pass through unchanged.
pub fn refine_current(
    current: &[Candidate],
    fused: &[FusedBox],
    target_frame: usize,
    params: &StabilizationParams,
) -> Vec<Candidate> {
    if fused.is_empty() {
        return current.to_vec();
    }
    let max_iou = |b: &BBox, others: &mut dyn Iterator<Item = BBox>| {
        others.map(|o| iou(b, &o)).fold(0.0, f64::max)
    };
    let kept: Vec<Candidate> = current
        .iter()
        .filter(|b| max_iou(&b.bbox, &mut fused.iter().map(|f| f.bbox)) >= params.iou_keep)
        .cloned()
        .collect();
    let added: Vec<Candidate> = fused
        .iter()
        .filter(|f| max_iou(&f.bbox, &mut kept.iter().map(|k| k.bbox)) < params.iou_add)
        .map(|f| Candidate {
            bbox: f.bbox,
            score: f.score,
            source: Source::Fused,
            frame: target_frame,
        })
        .collect();
    let added_order = score_order(&added);
    let mut out = kept;
    out.extend(added_order.into_iter().map(|i| added[i].clone()));
    out
}

/// Everything computed for one target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedProposalSet {
    pub frame: FrameRef,
    pub warped: Vec<Candidate>,
    pub fused: Vec<FusedBox>,
    pub stabilized: Vec<Candidate>,
}

pub fn stabilize_frame(
    target: &FrameRef,
    candidates: &[Vec<Candidate>],
    flows: &FlowMap,
    params: &StabilizationParams,
) -> Result<FusedProposalSet> {
    let warped = align_references(target, candidates, flows, params)?;
    let fused = fuse_references(&warped, params);
    let stabilized = refine_current(&candidates[target.index], &fused, target.index, params);
    Ok(FusedProposalSet {
        frame: target.clone(),
        warped,
        fused,
        stabilized,
    })
}

/// Stabilizes every frame of a video independently (in parallel on the
/// current rayon pool). `frames[i]` must describe frame index `i`.
pub fn stabilize_sequence(
    frames: &[FrameRef],
    candidates: &[Vec<Candidate>],
    flows: &FlowMap,
    params: &StabilizationParams,
) -> Result<Vec<Vec<Candidate>>> {
    params.validate()?;
    if frames.len() != candidates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frames but {} candidate lists",
            frames.len(),
            candidates.len()
        )));
    }
    frames
        .par_iter()
        .map(|f| stabilize_frame(f, candidates, flows, params).map(|s| s.stabilized))
        .collect()
}
