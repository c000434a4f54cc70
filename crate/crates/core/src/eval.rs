//! Detection and segmentation metrics.
//!
//! COCO-style conventions: greedy score-ordered matching, 101-point
//! interpolated AP averaged over IoU 0.50:0.05:0.95, recall at a per-frame
//! detection cap, and "large" objects of area above 96^2 px. Metrics with no
//! ground truth are absent (`None`), not zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::numeric::pairwise_sum;
use crate::tensor_io::MaskGrid;

pub const LARGE_AREA: f64 = 96.0 * 96.0;
pub const DEFAULT_MAX_DETS: usize = 100;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub mask: Option<MaskGrid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    /// Track id, stable across frames of one video.
    pub id: usize,
    pub bbox: BBox,
    pub mask: Option<MaskGrid>,
}

/// Predictions and ground truth of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalFrame {
    pub preds: Vec<Detection>,
    pub gts: Vec<GtObject>,
}

/// Prediction indices by descending score; ties keep input order.
fn by_score(preds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

/// Greedy one-to-one matching. `preds` must already be in descending score
/// order; each takes the highest-IoU unmatched ground truth at or above the
/// threshold (lowest index on ties). Returns the matched GT per prediction.
pub fn match_detections(preds: &[BBox], gts: &[BBox], iou_threshold: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; gts.len()];
    preds
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let v = iou(p, gt);
                if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            best.map(|(g, _)| {
                taken[g] = true;
                g
            })
        })
        .collect()
}

/// Score-ordered, capped predictions of a frame matched against the GTs that
/// pass `gt_filter`.
fn frame_matches(
    frame: &EvalFrame,
    max_dets: usize,
    iou_threshold: f64,
    gt_filter: impl Fn(&GtObject) -> bool,
) -> (Vec<(f64, bool)>, usize, Vec<Option<usize>>) {
    let order: Vec<usize> = by_score(&frame.preds).into_iter().take(max_dets).collect();
    let gts: Vec<usize> = (0..frame.gts.len()).filter(|&g| gt_filter(&frame.gts[g])).collect();
    let pred_boxes: Vec<BBox> = order.iter().map(|&i| frame.preds[i].bbox).collect();
    let gt_boxes: Vec<BBox> = gts.iter().map(|&g| frame.gts[g].bbox).collect();
    let m = match_detections(&pred_boxes, &gt_boxes, iou_threshold);
    let scored = order
        .iter()
        .zip(&m)
        .map(|(&i, g)| (frame.preds[i].score, g.is_some()))
        .collect();
    // matched GT index (into frame.gts) -> prediction index (into frame.preds)
    let mut gt_to_pred = vec![None; frame.gts.len()];
    for (&i, g) in order.iter().zip(&m) {
        if let Some(g) = g {
            gt_to_pred[gts[*g]] = Some(i);
        }
    }
    (scored, gts.len(), gt_to_pred)
}

/// 101-point interpolated area under the precision-recall curve.
///
/// `dets` holds `(score, is_true_positive)` across all frames, in frame
/// order; a stable sort by score makes the result independent of how frames
/// were processed.
pub fn interpolated_ap(dets: &[(f64, bool)], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].0.total_cmp(&dets[a].0));
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(dets.len());
    let mut precision = Vec::with_capacity(dets.len());
    for (n, &i) in order.iter().enumerate() {
        if dets[i].1 {
            tp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (n + 1) as f64);
    }
    // precision envelope
    for i in (1..precision.len()).rev() {
        precision[i - 1] = precision[i - 1].max(precision[i]);
    }
    let samples: Vec<f64> = (0..=100)
        .map(|r| {
            let r = r as f64 / 100.0;
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .collect();
    Some(pairwise_sum(&samples) / samples.len() as f64)
}

/// AP at one IoU threshold over all frames, with `max_dets` per frame.
pub fn average_precision(frames: &[EvalFrame], iou_threshold: f64, max_dets: usize) -> Option<f64> {
    let mut dets = Vec::new();
    let mut num_gt = 0;
    for f in frames {
        let (d, n, _) = frame_matches(f, max_dets, iou_threshold, |_| true);
        dets.extend(d);
        num_gt += n;
    }
    interpolated_ap(&dets, num_gt)
}

fn recall_over_thresholds(frames: &[EvalFrame], max_dets: usize, gt_filter: impl Fn(&GtObject) -> bool + Copy) -> Option<f64> {
    let total: usize = frames.iter().map(|f| f.gts.iter().filter(|g| gt_filter(g)).count()).sum();
    if total == 0 {
        return None;
    }
    let per_threshold: Vec<f64> = iou_thresholds()
        .iter()
        .map(|&t| {
            let matched: usize = frames
                .iter()
                .map(|f| frame_matches(f, max_dets, t, gt_filter).0.iter().filter(|d| d.1).count())
                .sum();
            matched as f64 / total as f64
        })
        .collect();
    Some(pairwise_sum(&per_threshold) / per_threshold.len() as f64)
}

/// Recall averaged over IoU 0.50:0.05:0.95 with the top `max_dets`
/// predictions of each frame.
pub fn average_recall(frames: &[EvalFrame], max_dets: usize) -> Option<f64> {
    recall_over_thresholds(frames, max_dets, |_| true)
}

/// [`average_recall`] over ground truth larger than 96^2 px. Predictions are
/// matched against the large objects only.
pub fn average_recall_large(frames: &[EvalFrame], max_dets: usize) -> Option<f64> {
    recall_over_thresholds(frames, max_dets, |g| g.bbox.area() > LARGE_AREA)
}

/// Recall at IoU 0.5.
pub fn recall_at(frames: &[EvalFrame], iou_threshold: f64, max_dets: usize) -> Option<f64> {
    let total: usize = frames.iter().map(|f| f.gts.len()).sum();
    if total == 0 {
        return None;
    }
    let matched: usize = frames
        .iter()
        .map(|f| frame_matches(f, max_dets, iou_threshold, |_| true).0.iter().filter(|d| d.1).count())
        .sum();
    Some(matched as f64 / total as f64)
}

/// Mean of the given mask IoUs, with `None` entries (unmatched ground
/// truth) counting as zero.
pub fn mean_mask_iou(pairs: &[(Option<&MaskGrid>, &MaskGrid)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let vals: Vec<f64> = pairs
        .iter()
        .map(|(p, g)| p.map_or(0.0, |p| if p.same_dims(g) { p.iou(g) } else { 0.0 }))
        .collect();
    Some(pairwise_sum(&vals) / vals.len() as f64)
}

/// Mask IoU over ground truth with masks, using box matching at IoU 0.5.
/// Predictions without a mask are rasterized from their box.
pub fn mean_iou(frames: &[EvalFrame]) -> Option<f64> {
    let mut owned: Vec<(Option<MaskGrid>, &MaskGrid)> = Vec::new();
    for f in frames {
        let (_, _, gt_to_pred) = frame_matches(f, DEFAULT_MAX_DETS, 0.5, |_| true);
        for (g, gt) in f.gts.iter().enumerate() {
            let Some(gm) = &gt.mask else { continue };
            let pm = gt_to_pred[g].map(|i| {
                let p = &f.preds[i];
                p.mask.clone().unwrap_or_else(|| MaskGrid::from_box(gm.width, gm.height, &p.bbox))
            });
            owned.push((pm, gm));
        }
    }
    let pairs: Vec<(Option<&MaskGrid>, &MaskGrid)> = owned.iter().map(|(p, g)| (p.as_ref(), *g)).collect();
    mean_mask_iou(&pairs)
}

/// Motion-compensated frame-to-frame center deviation of one track:
/// mean over `t` of `|(c_{t+1} - c_t) - (g_{t+1} - g_t)|`.
pub fn center_jitter(boxes: &[BBox], gt: &[BBox]) -> Result<f64> {
    if boxes.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} boxes vs {} ground-truth boxes",
            boxes.len(),
            gt.len()
        )));
    }
    if boxes.len() < 2 {
        return Err(Error::Invalid("center jitter needs a track of at least 2 frames".into()));
    }
    let steps: Vec<f64> = boxes
        .windows(2)
        .zip(gt.windows(2))
        .map(|(b, g)| {
            let (b0, b1, g0, g1) = (b[0].center(), b[1].center(), g[0].center(), g[1].center());
            ((b1.0 - b0.0) - (g1.0 - g0.0)).hypot((b1.1 - b0.1) - (g1.1 - g0.1))
        })
        .collect();
    Ok(pairwise_sum(&steps) / steps.len() as f64)
}

/// Summed jitter steps and step count over every ground-truth track.
///
/// A track's box in frame `t` is the prediction matched to it at IoU 0.5;
/// a step counts only when both consecutive frames have a matched box.
pub fn track_jitter_steps(video: &[EvalFrame]) -> (f64, usize) {
    let matched: Vec<Vec<(usize, BBox, BBox)>> = video
        .iter()
        .map(|f| {
            let (_, _, gt_to_pred) = frame_matches(f, DEFAULT_MAX_DETS, 0.5, |_| true);
            f.gts
                .iter()
                .zip(gt_to_pred)
                .filter_map(|(g, p)| p.map(|p| (g.id, f.preds[p].bbox, g.bbox)))
                .collect()
        })
        .collect();
    let mut steps = Vec::new();
    for pair in matched.windows(2) {
        for &(id, b0, g0) in &pair[0] {
            if let Some(&(_, b1, g1)) = pair[1].iter().find(|m| m.0 == id) {
                steps.push(center_jitter(&[b0, b1], &[g0, g1]).expect("two-frame track"));
            }
        }
    }
    (pairwise_sum(&steps), steps.len())
}

/// Mean jitter over all tracks of all videos; `None` without any step.
pub fn mean_track_jitter(videos: &[Vec<EvalFrame>]) -> Option<f64> {
    let (sum, n) = videos
        .iter()
        .map(|v| track_jitter_steps(v))
        .fold((0.0, 0), |(s, n), (a, b)| (s + a, n + b));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ar: Option<f64>,
    pub ar_large: Option<f64>,
    pub ar50: Option<f64>,
    pub miou: Option<f64>,
    /// Not a detection metric: motion-compensated center jitter in px.
    pub jitter: Option<f64>,
    pub num_frames: usize,
    pub num_gt: usize,
    pub num_preds: usize,
}

/// All metrics over a set of videos (one `Vec<EvalFrame>` per video).
pub fn evaluate(videos: &[Vec<EvalFrame>]) -> MetricReport {
    let frames: Vec<EvalFrame> = videos.iter().flatten().cloned().collect();
    let per_t: Vec<Option<f64>> = iou_thresholds()
        .iter()
        .map(|&t| average_precision(&frames, t, DEFAULT_MAX_DETS))
        .collect();
    let ap = per_t
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .map(|v| pairwise_sum(&v) / v.len() as f64);
    MetricReport {
        ap,
        ap50: per_t[0],
        ar: average_recall(&frames, DEFAULT_MAX_DETS),
        ar_large: average_recall_large(&frames, DEFAULT_MAX_DETS),
        ar50: recall_at(&frames, 0.5, DEFAULT_MAX_DETS),
        miou: mean_iou(&frames),
        jitter: mean_track_jitter(videos),
        num_frames: frames.len(),
        num_gt: frames.iter().map(|f| f.gts.len()).sum(),
        num_preds: frames.iter().map(|f| f.preds.len()).sum(),
    }
}

/// `(k, AR@k)` for each cap.
pub fn top_k_sweep(frames: &[EvalFrame], ks: &[usize]) -> Vec<(usize, Option<f64>)> {
    ks.iter().map(|&k| (k, average_recall(frames, k))).collect()
}

impl MetricReport {
    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let rows = [
            ("AP", fmt(self.ap)),
            ("AP50", fmt(self.ap50)),
            ("AR@100", fmt(self.ar)),
            ("AR(L)@100", fmt(self.ar_large)),
            ("AR50", fmt(self.ar50)),
            ("mIoU", fmt(self.miou)),
            ("jitter px", fmt(self.jitter)),
        ];
        let mut s = String::new();
        for (k, v) in rows {
            s.push_str(&format!("{k:<10} {v:>8}\n"));
        }
        s.push_str(&format!(
            "frames {} / gt {} / preds {}\n",
            self.num_frames, self.num_gt, self.num_preds
        ));
        s
    }
}
