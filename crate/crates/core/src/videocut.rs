//! Flow-driven mask tracking baseline.
//!
//! Masks are linked frame to frame by box IoU into regions. A region's mask
//! is dropped on frames where its flow-warped predecessor disagrees with it
//! (IoU gate), and a region whose mean flow magnitude stays below a
//! threshold for enough consecutive frames is treated as background and
//! removed from that frame onward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::ScoredMask;
use crate::flow::{mean_flow_magnitude_in_mask, FlowField};
use crate::geometry::{iou, BBox};
use crate::stabilize::FlowMap;
use crate::tensor_io::MaskGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct VideoCutParams {
    pub association_iou: f64,
    pub gate_iou: f64,
    /// Mean flow magnitude (px) below which a region counts as static.
    pub mag_threshold: f64,
    pub streak_needed: usize,
}

impl Default for VideoCutParams {
    fn default() -> Self {
        VideoCutParams {
            association_iou: 0.5,
            gate_iou: 0.3,
            mag_threshold: 0.5,
            streak_needed: 3,
        }
    }
}

impl VideoCutParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("association-iou", self.association_iou), ("gate-iou", self.gate_iou)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Invalid(format!("videocut params: {name} {v} outside (0,1]")));
            }
        }
        if !(self.mag_threshold >= 0.0) || self.streak_needed == 0 {
            return Err(Error::Invalid(
                "videocut params: mag-threshold must be >= 0 and streak-needed >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Backward nearest-neighbor warp: output pixel `q` takes the mask value at
/// `round(q - flow(q))`, background when that falls outside the frame.
pub fn warp_mask(mask: &MaskGrid, flow: &FlowField) -> Result<MaskGrid> {
    let (w, h) = (mask.width, mask.height);
    if flow.width() != w || flow.height() != h {
        return Err(Error::DimensionMismatch(format!(
            "mask {w}x{h} vs flow {}x{}",
            flow.width(),
            flow.height()
        )));
    }
    let mut out = MaskGrid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let sx = (x as f64 - flow.u.get(x, y)).round();
            let sy = (y as f64 - flow.v.get(x, y)).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h && mask.is_fg(sx as usize, sy as usize) {
                out.set(x, y, 1.0);
            }
        }
    }
    Ok(out)
}

/// True when the warped and current boxes agree well enough to keep.
pub fn temporal_gate(warped: &BBox, current: &BBox, iou_threshold: f64) -> bool {
    iou(warped, current) >= iou_threshold
}

/// One frame of a tracked region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFrame {
    pub frame: usize,
    /// Position of the mask in that frame's input list.
    pub input_index: usize,
    pub mask: MaskGrid,
    pub bbox: BBox,
    pub score: f64,
    pub is_bg: bool,
    /// Dropped by the temporal gate.
    pub gated: bool,
    /// Removed as background.
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedRegion {
    pub id: usize,
    /// Consecutive frames, ascending.
    pub frames: Vec<RegionFrame>,
    /// Current run of consecutive background frames.
    pub bg_streak: usize,
}

impl TrackedRegion {
    pub fn last_frame(&self) -> usize {
        self.frames.last().map_or(0, |f| f.frame)
    }

    /// Frames that survive gating and background removal.
    pub fn surviving(&self) -> impl Iterator<Item = &RegionFrame> {
        self.frames.iter().filter(|f| !f.gated && !f.removed)
    }
}

/// Links masks between consecutive frames by greedy highest box IoU.
///
/// Only regions present in the previous frame can be extended, so a mask
/// that skips a frame starts a new region.
pub fn associate_regions(per_frame: &[Vec<ScoredMask>], association_iou: f64) -> Result<Vec<TrackedRegion>> {
    let mut regions: Vec<TrackedRegion> = Vec::new();
    for (t, masks) in per_frame.iter().enumerate() {
        let boxes = masks
            .iter()
            .map(|m| {
                m.mask
                    .bounding_box()
                    .ok_or_else(|| Error::EmptyRegion(format!("empty mask in frame {t}")))
            })
            .collect::<Result<Vec<_>>>()?;

        let active: Vec<usize> = if t == 0 {
            Vec::new()
        } else {
            (0..regions.len()).filter(|&r| regions[r].last_frame() == t - 1).collect()
        };
        let mut pairs = Vec::new();
        for &r in &active {
            let prev = regions[r].frames.last().unwrap().bbox;
            for (m, b) in boxes.iter().enumerate() {
                let v = iou(&prev, b);
                if v >= association_iou {
                    pairs.push((v, r, m));
                }
            }
        }
        // highest IoU first, then region, then mask
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut assigned: Vec<Option<usize>> = vec![None; masks.len()];
        let mut region_taken = vec![false; regions.len()];
        for (_, r, m) in pairs {
            if assigned[m].is_none() && !region_taken[r] {
                assigned[m] = Some(r);
                region_taken[r] = true;
            }
        }
        for (m, sm) in masks.iter().enumerate() {
            let rf = RegionFrame {
                frame: t,
                input_index: m,
                mask: sm.mask.binarize(),
                bbox: boxes[m],
                score: sm.score,
                is_bg: false,
                gated: false,
                removed: false,
            };
            match assigned[m] {
                Some(r) => regions[r].frames.push(rf),
                None => regions.push(TrackedRegion {
                    id: regions.len(),
                    frames: vec![rf],
                    bg_streak: 0,
                }),
            }
        }
    }
    Ok(regions)
}

fn flow_between<'a>(flows: &'a FlowMap, video: &str, src: usize, dst: usize) -> Result<&'a FlowField> {
    flows.get(&(src, dst)).ok_or_else(|| Error::MissingFlow {
        video: video.to_string(),
        src,
        dst,
    })
}

/// Marks region frames whose warped predecessor fails the IoU gate.
pub fn apply_temporal_gate(
    regions: &mut [TrackedRegion],
    flows: &FlowMap,
    video: &str,
    gate_iou: f64,
) -> Result<()> {
    for region in regions {
        for i in 1..region.frames.len() {
            let (prev, cur) = (&region.frames[i - 1], &region.frames[i]);
            let flow = flow_between(flows, video, prev.frame, cur.frame)?;
            let keep = warp_mask(&prev.mask, flow)?
                .bounding_box()
                .is_some_and(|w| temporal_gate(&w, &cur.bbox, gate_iou));
            region.frames[i].gated = !keep;
        }
    }
    Ok(())
}

/// Flags static frames and removes regions after `streak_needed`
/// consecutive static frames, from the frame completing the streak onward.
///
/// Frame `t` is measured with the flow `t -> t+1`, or `t-1 -> t` on the last
/// frame of the video.
pub fn background_scan(
    regions: &mut [TrackedRegion],
    flows: &FlowMap,
    video: &str,
    num_frames: usize,
    params: &VideoCutParams,
) -> Result<()> {
    for region in regions {
        region.bg_streak = 0;
        let mut removing = false;
        for rf in &mut region.frames {
            let t = rf.frame;
            let flow = if t + 1 < num_frames {
                flow_between(flows, video, t, t + 1)?
            } else if t > 0 {
                flow_between(flows, video, t - 1, t)?
            } else {
                // a single-frame video has no motion evidence
                rf.removed = removing;
                continue;
            };
            rf.is_bg = mean_flow_magnitude_in_mask(flow, &rf.mask)? < params.mag_threshold;
            region.bg_streak = if rf.is_bg { region.bg_streak + 1 } else { 0 };
            if region.bg_streak >= params.streak_needed {
                removing = true;
            }
            rf.removed = removing;
        }
    }
    Ok(())
}

/// Associate, gate, and remove background for one video.
pub fn run_videocut(
    video: &str,
    per_frame: &[Vec<ScoredMask>],
    flows: &FlowMap,
    params: &VideoCutParams,
) -> Result<Vec<TrackedRegion>> {
    params.validate()?;
    let mut regions = associate_regions(per_frame, params.association_iou)?;
    apply_temporal_gate(&mut regions, flows, video, params.gate_iou)?;
    background_scan(&mut regions, flows, video, per_frame.len(), params)?;
    Ok(regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> MaskGrid {
        MaskGrid::from_box(w, h, &BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64).unwrap())
    }

    fn scored(mask: MaskGrid) -> ScoredMask {
        ScoredMask { mask, score: 0.5 }
    }

    fn flows(n: usize, w: usize, h: usize, u: f64) -> FlowMap {
        (0..n.saturating_sub(1))
            .map(|t| ((t, t + 1), FlowField::constant(w, h, u, 0.0)))
            .collect()
    }

    #[test]
    fn warp_identity_shift_and_off_image() {
        let m = rect(20, 20, 5, 5, 10, 12);
        assert_eq!(warp_mask(&m, &FlowField::zeros(20, 20)).unwrap(), m);
        assert_eq!(warp_mask(&m, &FlowField::constant(20, 20, 2.0, 0.0)).unwrap(), rect(20, 20, 7, 5, 12, 12));
        assert_eq!(warp_mask(&m, &FlowField::constant(20, 20, 40.0, 0.0)).unwrap().foreground_count(), 0);
        assert!(warp_mask(&m, &FlowField::zeros(10, 20)).is_err());
    }

    #[test]
    fn gate_thresholds() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert!(temporal_gate(&a, &a, 1.0));
        assert!(!temporal_gate(&a, &a.translate(20.0, 0.0), 0.3));
        // IoU 45/100 at threshold 0.5
        let b = BBox::new(0.0, 0.0, 10.0, 4.5).unwrap();
        assert!((iou(&a, &b) - 0.45).abs() < 1e-12);
        assert!(!temporal_gate(&a, &b, 0.5));
    }

    #[test]
    fn association_partitions() {
        let a = rect(30, 30, 0, 0, 8, 8);
        let b = rect(30, 30, 20, 20, 28, 28);
        let per_frame: Vec<_> = (0..4).map(|_| vec![scored(a.clone()), scored(b.clone())]).collect();
        let regions = associate_regions(&per_frame, 0.5).unwrap();
        assert_eq!(regions.len(), 2);
        assert!(regions.iter().all(|r| r.frames.len() == 4));
        assert!(regions[0].frames.iter().all(|f| f.input_index == 0));
    }

    #[test]
    fn no_gap_bridging() {
        let a = rect(30, 30, 0, 0, 10, 10);
        let near = rect(30, 30, 0, 0, 10, 9);
        let per_frame = vec![vec![scored(a)], vec![], vec![scored(near)]];
        let regions = associate_regions(&per_frame, 0.5).unwrap();
        assert_eq!(regions.len(), 2);
    }

    #[test]
    fn static_region_removed_from_third_frame() {
        let a = rect(30, 30, 5, 5, 15, 15);
        let per_frame: Vec<_> = (0..6).map(|_| vec![scored(a.clone())]).collect();
        let regions = run_videocut("v", &per_frame, &flows(6, 30, 30, 0.0), &VideoCutParams::default()).unwrap();
        let removed: Vec<bool> = regions[0].frames.iter().map(|f| f.removed).collect();
        assert_eq!(removed, vec![false, false, true, true, true, true]);
    }

    #[test]
    fn moving_region_survives() {
        let per_frame: Vec<_> = (0..5).map(|t| vec![scored(rect(40, 20, 2 + t, 5, 12 + t, 15))]).collect();
        let regions = run_videocut("v", &per_frame, &flows(5, 40, 20, 1.0), &VideoCutParams::default()).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].surviving().count(), 5);
        assert!(regions[0].frames.iter().all(|f| !f.is_bg));
    }

    #[test]
    fn alternating_motion_never_removed() {
        let a = rect(30, 30, 5, 5, 15, 15);
        let per_frame: Vec<_> = (0..8).map(|_| vec![scored(a.clone())]).collect();
        let mut fl = FlowMap::new();
        for t in 0..7 {
            fl.insert((t, t + 1), FlowField::constant(30, 30, if t % 2 == 0 { 3.0 } else { 0.0 }, 0.0));
        }
        let mut regions = associate_regions(&per_frame, 0.5).unwrap();
        background_scan(&mut regions, &fl, "v", 8, &VideoCutParams::default()).unwrap();
        assert!(regions[0].frames.iter().all(|f| !f.removed));
    }

    #[test]
    fn gate_drops_jump() {
        let per_frame = vec![vec![scored(rect(40, 40, 0, 0, 10, 10))], vec![scored(rect(40, 40, 3, 0, 13, 10))]];
        // flow says the object moved 10 px, the mask says 3
        let mut regions = associate_regions(&per_frame, 0.5).unwrap();
        assert_eq!(regions.len(), 1);
        let mut fl = FlowMap::new();
        fl.insert((0, 1), FlowField::constant(40, 40, 10.0, 0.0));
        apply_temporal_gate(&mut regions, &fl, "v", 0.3).unwrap();
        assert!(regions[0].frames[1].gated);
    }
}
