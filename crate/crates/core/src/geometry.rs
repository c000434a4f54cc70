//! Axis-aligned boxes and the selection primitives built on them.
//!
//! Coordinates are continuous pixels: a box `(x1, y1, x2, y2)` covers
//! `[x1, x2) x [y1, y2)` and has area `(x2 - x1) * (y2 - y1)` with no `+1`
//! convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Builds a box, rejecting degenerate or non-finite corners.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        if !b.is_valid() {
            return Err(Error::InvalidBox([x1, y1, x2, y2]));
        }
        Ok(b)
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) * 0.5, (self.y1 + self.y2) * 0.5)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Smallest box containing both.
    pub fn union_box(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

/// Intersection over union. Symmetric; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Identifies one frame of one video.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub video: String,
    pub index: usize,
    pub width: usize,
    pub height: usize,
}

impl FrameRef {
    pub fn new(video: impl Into<String>, index: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(FrameRef {
            video: video.into(),
            index,
            width,
            height,
        })
    }

    pub fn full_box(&self) -> BBox {
        BBox {
            x1: 0.0,
            y1: 0.0,
            x2: self.width as f64,
            y2: self.height as f64,
        }
    }
}

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Current,
    WarpedReference,
    Fused,
    Detector,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Current => "current",
            Source::WarpedReference => "warped-reference",
            Source::Fused => "fused",
            Source::Detector => "detector",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub bbox: BBox,
    pub score: f64,
    pub source: Source,
    pub frame: usize,
}

impl Candidate {
    pub fn new(bbox: BBox, score: f64, source: Source, frame: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Invalid(format!("candidate score {score} outside [0,1]")));
        }
        Ok(Candidate {
            bbox,
            score,
            source,
            frame,
        })
    }
}

/// Clips a box to the frame. Returns `None` when nothing of it remains.
pub fn clamp_box(b: &BBox, frame: &FrameRef) -> Option<BBox> {
    let w = frame.width as f64;
    let h = frame.height as f64;
    let c = BBox {
        x1: b.x1.clamp(0.0, w),
        y1: b.y1.clamp(0.0, h),
        x2: b.x2.clamp(0.0, w),
        y2: b.y2.clamp(0.0, h),
    };
    if c.x2 > c.x1 && c.y2 > c.y1 {
        Some(c)
    } else {
        None
    }
}

/// Indices of `cands` in descending score order; equal scores keep input order.
pub(crate) fn score_order(cands: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| cands[b].score.total_cmp(&cands[a].score));
    order
}

/// Greedy non-maximum suppression.
///
/// Candidates are visited by descending score (ties by input position); a
/// candidate survives unless its IoU with an already kept one reaches
/// `iou_threshold`.
pub fn nms(cands: &[Candidate], iou_threshold: f64) -> Vec<Candidate> {
    let mut kept: Vec<Candidate> = Vec::new();
    for i in score_order(cands) {
        let c = &cands[i];
        if kept.iter().all(|k| iou(&k.bbox, &c.bbox) < iou_threshold) {
            kept.push(c.clone());
        }
    }
    kept
}

/// The `k` best candidates scoring at least `min_score`, best first.
pub fn top_k(cands: &[Candidate], k: usize, min_score: f64) -> Vec<Candidate> {
    score_order(cands)
        .into_iter()
        .filter(|&i| cands[i].score >= min_score)
        .take(k)
        .map(|i| cands[i].clone())
        .collect()
}
