//! Synthetic videos with known motion, for end-to-end checks.
//!
//! Textured rectangles move at constant velocity over a static textured
//! background. Rendering is anti-aliased (exact area coverage) and object
//! textures move with the object, so the true flow inside an object is its
//! velocity. Alongside the frames the generator emits ground truth, noisy
//! per-frame candidates and synthetic patch features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GtObject;
use crate::geometry::{clamp_box, BBox, Candidate, FrameRef, Source};
use crate::grid::Grid;
use crate::tensor_io::{FeatureMap, MaskGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MovingRect {
    /// Top-left corner at frame 0 (before applying `phase`).
    pub origin: [f64; 2],
    pub size: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    /// Frame offset along the trajectory: position(t) = origin + velocity (t + phase).
    #[serde(default)]
    pub phase: f64,
}

impl MovingRect {
    pub fn bbox_at(&self, t: usize) -> BBox {
        let s = t as f64 + self.phase;
        let x = self.origin[0] + self.velocity[0] * s;
        let y = self.origin[1] + self.velocity[1] * s;
        BBox {
            x1: x,
            y1: y,
            x2: x + self.size[0],
            y2: y + self.size[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct CandidateNoise {
    /// Std-dev of independent per-coordinate box noise, px.
    pub jitter_sigma: f64,
    /// Probability that a true object's candidate is missing in a frame.
    pub dropout: f64,
    /// Expected number of spurious boxes per frame.
    pub spurious_rate: f64,
}

impl Default for CandidateNoise {
    fn default() -> Self {
        CandidateNoise {
            jitter_sigma: 2.0,
            dropout: 0.2,
            spurious_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub length: usize,
    pub objects: Vec<MovingRect>,
    pub noise: CandidateNoise,
    /// Lattice spacing of the value-noise textures, px.
    pub texture_cell: usize,
    pub patch_size: usize,
    pub backbones: usize,
    pub feature_channels: usize,
    pub feature_noise: f64,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        SyntheticScene {
            width: 160,
            height: 120,
            length: 20,
            objects: vec![
                MovingRect {
                    origin: [20.0, 30.0],
                    size: [36.0, 30.0],
                    velocity: [1.5, 0.5],
                    phase: 0.0,
                },
                MovingRect {
                    origin: [100.0, 60.0],
                    size: [30.0, 36.0],
                    velocity: [-1.0, 0.75],
                    phase: 0.0,
                },
            ],
            noise: CandidateNoise::default(),
            texture_cell: 4,
            patch_size: 8,
            backbones: 2,
            feature_channels: 16,
            feature_noise: 0.15,
        }
    }
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 || self.length == 0 {
            return Err(Error::Invalid("synthetic scene: need at least 16x16 and one frame".into()));
        }
        if self.texture_cell == 0 || self.patch_size == 0 || self.backbones == 0 || self.feature_channels == 0 {
            return Err(Error::Invalid(
                "synthetic scene: texture-cell, patch-size, backbones and feature-channels must be >= 1".into(),
            ));
        }
        let n = &self.noise;
        if !(n.jitter_sigma >= 0.0) || !(0.0..=1.0).contains(&n.dropout) || !(n.spurious_rate >= 0.0) {
            return Err(Error::Invalid(format!("synthetic scene: bad noise params {n:?}")));
        }
        let full = BBox {
            x1: 0.0,
            y1: 0.0,
            x2: self.width as f64,
            y2: self.height as f64,
        };
        for (k, o) in self.objects.iter().enumerate() {
            if !(o.size[0] >= 1.0 && o.size[1] >= 1.0) {
                return Err(Error::Invalid(format!("synthetic object {k} smaller than 1 px")));
            }
            for t in 0..self.length {
                if !full.contains(&o.bbox_at(t)) {
                    return Err(Error::Invalid(format!("synthetic object {k} leaves the frame at t={t}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Gray frames in [0, 1].
    pub frames: Vec<Grid>,
    pub gt: Vec<Vec<GtObject>>,
    /// Noisy raw candidates, `candidates[t]` for frame `t`.
    pub candidates: Vec<Vec<Candidate>>,
    /// Patch features, `features[t][backbone]`.
    pub features: Vec<Vec<FeatureMap>>,
}

impl SyntheticVideo {
    pub fn frame_refs(&self) -> Vec<FrameRef> {
        (0..self.frames.len())
            .map(|t| FrameRef {
                video: self.id.clone(),
                index: t,
                width: self.width,
                height: self.height,
            })
            .collect()
    }
}

// independent random streams per purpose
const STREAM_BACKGROUND: u64 = 1;
const STREAM_OBJECTS: u64 = 2;
const STREAM_CANDIDATES: u64 = 3;
const STREAM_FEATURES: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Bilinearly interpolated lattice noise in [0, 1].
struct ValueNoise {
    cell: f64,
    cols: usize,
    rows: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(width: f64, height: f64, cell: usize, rng: &mut ChaCha8Rng) -> Self {
        let cols = (width / cell as f64).ceil() as usize + 2;
        let rows = (height / cell as f64).ceil() as usize + 2;
        let lattice = (0..cols * rows).map(|_| rng.random::<f64>()).collect();
        ValueNoise {
            cell: cell as f64,
            cols,
            rows,
            lattice,
        }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let gx = (x / self.cell).clamp(0.0, (self.cols - 1) as f64);
        let gy = (y / self.cell).clamp(0.0, (self.rows - 1) as f64);
        let (x0, y0) = ((gx.floor() as usize).min(self.cols - 2), (gy.floor() as usize).min(self.rows - 2));
        let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
        let at = |c: usize, r: usize| self.lattice[r * self.cols + c];
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
        let bot = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

fn render_frame(scene: &SyntheticScene, t: usize, bg: &ValueNoise, textures: &[ValueNoise]) -> Grid {
    Grid::from_fn(scene.width, scene.height, |x, y| {
        let (px, py) = (x as f64, y as f64);
        // background in the darker half, objects in the brighter half
        let mut v = 0.1 + 0.4 * bg.sample(px + 0.5, py + 0.5);
        for (o, tex) in scene.objects.iter().zip(textures) {
            let b = o.bbox_at(t);
            let cov = overlap(px, px + 1.0, b.x1, b.x2) * overlap(py, py + 1.0, b.y1, b.y2);
            if cov > 0.0 {
                let inside = 0.5 + 0.45 * tex.sample(px + 0.5 - b.x1, py + 0.5 - b.y1);
                v = cov * inside + (1.0 - cov) * v;
            }
        }
        v
    })
}

fn noisy_candidates(scene: &SyntheticScene, frame: &FrameRef, gt: &[GtObject], rng: &mut ChaCha8Rng) -> Vec<Candidate> {
    let n = &scene.noise;
    let jitter = Normal::new(0.0, n.jitter_sigma).expect("validated sigma");
    let mut out = Vec::new();
    for g in gt {
        // draw every variate so the stream does not depend on outcomes
        let drop = rng.random::<f64>() < n.dropout;
        let d: [f64; 4] = std::array::from_fn(|_| jitter.sample(rng));
        let score = rng.random_range(0.5..1.0);
        if drop {
            continue;
        }
        let raw = BBox {
            x1: g.bbox.x1 + d[0],
            y1: g.bbox.y1 + d[1],
            x2: g.bbox.x2 + d[2],
            y2: g.bbox.y2 + d[3],
        };
        if let Some(bbox) = raw.is_valid().then(|| clamp_box(&raw, frame)).flatten() {
            out.push(Candidate {
                bbox,
                score,
                source: Source::Current,
                frame: frame.index,
            });
        }
    }
    let whole = n.spurious_rate.floor() as usize;
    let extra = usize::from(rng.random::<f64>() < n.spurious_rate.fract());
    for _ in 0..whole + extra {
        let (fw, fh) = (frame.width as f64, frame.height as f64);
        let w = rng.random_range(0.1..0.35) * fw;
        let h = rng.random_range(0.1..0.35) * fh;
        let x = rng.random_range(0.0..fw - w);
        let y = rng.random_range(0.0..fh - h);
        let score = rng.random_range(0.3..0.9);
        out.push(Candidate {
            bbox: BBox {
                x1: x,
                y1: y,
                x2: x + w,
                y2: y + h,
            },
            score,
            source: Source::Current,
            frame: frame.index,
        });
    }
    out
}

fn patch_features(
    scene: &SyntheticScene,
    frame: &FrameRef,
    gt: &[GtObject],
    prototypes: &[Vec<Vec<f64>>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FeatureMap>> {
    let ps = scene.patch_size;
    let rows = frame.height.div_ceil(ps);
    let cols = frame.width.div_ceil(ps);
    let noise = Normal::new(0.0, scene.feature_noise.max(0.0)).expect("non-negative sigma");
    let mut maps = Vec::with_capacity(prototypes.len());
    for (b, protos) in prototypes.iter().enumerate() {
        let mut data = Vec::with_capacity(rows * cols * scene.feature_channels);
        for r in 0..rows {
            for c in 0..cols {
                let patch = BBox {
                    x1: (c * ps) as f64,
                    y1: (r * ps) as f64,
                    x2: ((c + 1) * ps).min(frame.width) as f64,
                    y2: ((r + 1) * ps).min(frame.height) as f64,
                };
                // majority owner of the patch; background is prototype 0
                let mut owner = 0;
                for (k, g) in gt.iter().enumerate() {
                    if g.bbox.intersection_area(&patch) >= 0.5 * patch.area() {
                        owner = k + 1;
                    }
                }
                for &p in &protos[owner] {
                    data.push(p + noise.sample(rng));
                }
            }
        }
        maps.push(FeatureMap::new(
            frame.clone(),
            format!("synth{b}"),
            rows,
            cols,
            scene.feature_channels,
            ps,
            data,
        )?);
    }
    Ok(maps)
}

/// Renders a scene. Fully determined by `(scene, seed)`.
pub fn generate_synthetic(scene: &SyntheticScene, id: &str, seed: u64) -> Result<SyntheticVideo> {
    scene.validate()?;
    let (w, h) = (scene.width as f64, scene.height as f64);
    let bg = ValueNoise::new(w, h, scene.texture_cell, &mut stream(seed, STREAM_BACKGROUND));
    let mut obj_rng = stream(seed, STREAM_OBJECTS);
    let textures: Vec<ValueNoise> = scene
        .objects
        .iter()
        .map(|o| ValueNoise::new(o.size[0], o.size[1], scene.texture_cell, &mut obj_rng))
        .collect();

    let mut feat_rng = stream(seed, STREAM_FEATURES);
    let prototypes: Vec<Vec<Vec<f64>>> = (0..scene.backbones)
        .map(|_| {
            (0..=scene.objects.len())
                .map(|_| {
                    (0..scene.feature_channels)
                        .map(|_| feat_rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut cand_rng = stream(seed, STREAM_CANDIDATES);
    let mut out = SyntheticVideo {
        id: id.to_string(),
        width: scene.width,
        height: scene.height,
        frames: Vec::new(),
        gt: Vec::new(),
        candidates: Vec::new(),
        features: Vec::new(),
    };
    for t in 0..scene.length {
        let frame = FrameRef::new(id, t, scene.width, scene.height)?;
        let gt: Vec<GtObject> = scene
            .objects
            .iter()
            .enumerate()
            .map(|(k, o)| {
                let bbox = o.bbox_at(t);
                GtObject {
                    id: k,
                    bbox,
                    mask: Some(MaskGrid::from_box(scene.width, scene.height, &bbox)),
                }
            })
            .collect();
        out.frames.push(render_frame(scene, t, &bg, &textures));
        out.candidates.push(noisy_candidates(scene, &frame, &gt, &mut cand_rng));
        out.features.push(patch_features(scene, &frame, &gt, &prototypes, &mut feat_rng)?);
        out.gt.push(gt);
    }
    Ok(out)
}
