//! JSON schemas for pseudo-labels and ground truth.
//!
//! Masks are stored as external TensorFiles; the JSON holds their paths
//! relative to the directory of the JSON file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Detection, EvalFrame, GtObject};
use crate::geometry::{BBox, Candidate, FrameRef, Source};
use crate::tensor_io::{read_tensor, MaskGrid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<usize>,
}

impl Label {
    pub fn from_candidate(c: &Candidate) -> Self {
        Label {
            bbox: c.bbox,
            score: c.score,
            source: c.source,
            mask: None,
            region: None,
        }
    }

    pub fn to_candidate(&self, frame: usize) -> Candidate {
        Candidate {
            bbox: self.bbox,
            score: self.score,
            source: self.source,
            frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFrame {
    pub index: usize,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVideo {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<LabelFrame>,
}

impl LabelVideo {
    pub fn frame_ref(&self, index: usize) -> Result<FrameRef> {
        FrameRef::new(self.id.clone(), index, self.width, self.height)
    }

    /// Candidates per frame; frame `i` of the result is `frames[i]`.
    pub fn candidates(&self) -> Vec<Vec<Candidate>> {
        self.frames
            .iter()
            .map(|f| f.labels.iter().map(|l| l.to_candidate(f.index)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub version: u32,
    pub videos: Vec<LabelVideo>,
}

impl PseudoLabelSet {
    pub fn new(videos: Vec<LabelVideo>) -> Self {
        PseudoLabelSet {
            version: SCHEMA_VERSION,
            videos,
        }
    }

    /// Checks the schema version, frame numbering, box clamping and, when
    /// `base` is given, that every mask reference parses at frame size.
    pub fn validate(&self, base: Option<&Path>) -> Result<()> {
        check_version(self.version)?;
        for v in &self.videos {
            check_frames(&v.id, v.frames.iter().map(|f| f.index))?;
            let full = v.frame_ref(0)?.full_box();
            for f in &v.frames {
                for l in &f.labels {
                    check_box(&v.id, f.index, &l.bbox, &full)?;
                    if !(0.0..=1.0).contains(&l.score) {
                        return Err(Error::Invalid(format!(
                            "{}/{}: score {} outside [0,1]",
                            v.id, f.index, l.score
                        )));
                    }
                    if let (Some(base), Some(m)) = (base, &l.mask) {
                        load_mask(base, m, v.width, v.height)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn video(&self, id: &str) -> Option<&LabelVideo> {
        self.videos.iter().find(|v| v.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtEntry {
    pub id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtFrame {
    pub index: usize,
    pub objects: Vec<GtEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtVideo {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<GtFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSet {
    pub version: u32,
    pub videos: Vec<GtVideo>,
}

impl GroundTruthSet {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        for v in &self.videos {
            check_frames(&v.id, v.frames.iter().map(|f| f.index))?;
            let full = FrameRef::new(v.id.clone(), 0, v.width, v.height)?.full_box();
            for f in &v.frames {
                let mut ids: Vec<usize> = f.objects.iter().map(|o| o.id).collect();
                ids.sort_unstable();
                if ids.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::Invalid(format!("{}/{}: duplicate object id", v.id, f.index)));
                }
                for o in &f.objects {
                    check_box(&v.id, f.index, &o.bbox, &full)?;
                }
            }
        }
        Ok(())
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported schema version {v} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

fn check_frames(video: &str, indices: impl Iterator<Item = usize>) -> Result<()> {
    for (i, idx) in indices.enumerate() {
        if i != idx {
            return Err(Error::Invalid(format!(
                "{video}: frame {i} has index {idx}; frames must be numbered 0..n"
            )));
        }
    }
    Ok(())
}

fn check_box(video: &str, frame: usize, b: &BBox, full: &BBox) -> Result<()> {
    if !full.contains(b) {
        return Err(Error::Invalid(format!(
            "{video}/{frame}: box {:?} not clamped to the frame",
            b.to_array()
        )));
    }
    Ok(())
}

pub fn load_mask(base: &Path, rel: &str, width: usize, height: usize) -> Result<MaskGrid> {
    let m = MaskGrid::from_tensor(&read_tensor(base.join(rel))?)?;
    if m.width != width || m.height != height {
        return Err(Error::DimensionMismatch(format!(
            "mask {rel} is {}x{}, frame is {width}x{height}",
            m.width, m.height
        )));
    }
    Ok(m)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline; creates parent directories.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<PseudoLabelSet> {
    let set: PseudoLabelSet = read_json(path)?;
    set.validate(path.parent())?;
    Ok(set)
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruthSet> {
    let set: GroundTruthSet = read_json(path)?;
    set.validate()?;
    Ok(set)
}

/// Pairs predictions with ground truth frame by frame, loading masks from
/// `pred_base` / `gt_base`. Videos missing from `preds` count as empty.
pub fn eval_frames(
    preds: &PseudoLabelSet,
    pred_base: &Path,
    gt: &GroundTruthSet,
    gt_base: &Path,
) -> Result<Vec<Vec<EvalFrame>>> {
    gt.videos
        .iter()
        .map(|gv| {
            let pv = preds.video(&gv.id);
            gv.frames
                .iter()
                .map(|gf| {
                    let gts = gf
                        .objects
                        .iter()
                        .map(|o| {
                            Ok(GtObject {
                                id: o.id,
                                bbox: o.bbox,
                                mask: o
                                    .mask
                                    .as_ref()
                                    .map(|m| load_mask(gt_base, m, gv.width, gv.height))
                                    .transpose()?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let preds = match pv.and_then(|v| v.frames.get(gf.index)) {
                        Some(pf) => pf
                            .labels
                            .iter()
                            .map(|l| {
                                Ok(Detection {
                                    bbox: l.bbox,
                                    score: l.score,
                                    mask: l
                                        .mask
                                        .as_ref()
                                        .map(|m| load_mask(pred_base, m, gv.width, gv.height))
                                        .transpose()?,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?,
                        None => Vec::new(),
                    };
                    Ok(EvalFrame { preds, gts })
                })
                .collect()
        })
        .collect()
}
