//! Batch orchestration over a dataset directory.
//!
//! Input layout under `root`:
//!
//! ```text
//! frames/<video>/<frame:06>.pgm            gray frames (or u8 [H, W] tensors)
//! features/<video>/<frame:06>.<backbone>.vtk
//! candidates.json                          raw candidates (when `candidates = "file"`)
//! gt.json                                  ground truth for the eval stage
//! ```
//!
//! Every stage reads its inputs from disk and writes its outputs under
//! `output`, so any suffix of the stage list can be rerun on its own and
//! reproduces the same bytes. `manifest.json` is written last and records
//! the config hash and a SHA-256 per output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distill::{LossParams, ScheduleParams};
use crate::error::{Error, Result};
use crate::eval::{evaluate, top_k_sweep, MetricReport};
use crate::extract::{extract_candidates, ExtractParams, ScoredMask};
use crate::flow::{estimate_flow, FlowField, FlowParams};
use crate::geometry::{FrameRef, Source};
use crate::grid::Grid;
use crate::labels::{
    eval_frames, load_mask, read_ground_truth, read_json, read_labels, write_json, GroundTruthSet, GtEntry, GtFrame,
    GtVideo, Label, LabelFrame, LabelVideo, PseudoLabelSet, SCHEMA_VERSION,
};
use crate::stabilize::{reference_frames, stabilize_sequence, FlowMap, StabilizationParams};
use crate::synth::{generate_synthetic, SyntheticScene, SyntheticVideo};
use crate::tensor_io::{grid_to_u8, load_frame_gray, read_rgb, read_tensor, write_pgm, write_ppm, write_tensor, FeatureMap, MaskGrid};
use crate::videocut::{run_videocut, VideoCutParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Flow,
    Extract,
    Stabilize,
    Videocut,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Flow, Stage::Extract, Stage::Stabilize, Stage::Videocut, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Flow => "flow",
            Stage::Extract => "extract",
            Stage::Stabilize => "stabilize",
            Stage::Videocut => "videocut",
            Stage::Eval => "eval",
        }
    }
}

/// Where the per-frame raw candidates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSource {
    /// Run extraction on `features/`.
    Extract,
    /// Read `candidates.json` from the dataset root.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SelsaParams {
    pub temperature: f64,
}

impl Default for SelsaParams {
    fn default() -> Self {
        SelsaParams { temperature: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct EvalParams {
    pub top_k_sweep: Vec<usize>,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            top_k_sweep: vec![30, 100, 120, 150, 200],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct PipelineConfig {
    pub root: PathBuf,
    /// Output directory; empty means `<root>/out`.
    pub output: PathBuf,
    pub stages: Vec<Stage>,
    pub candidates: CandidateSource,
    /// Patch size of the feature grids; derived from the grid when absent.
    pub patch_size: Option<usize>,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub flow: FlowParams,
    pub extract: ExtractParams,
    pub stabilize: StabilizationParams,
    pub videocut: VideoCutParams,
    pub losses: LossParams,
    pub schedule: ScheduleParams,
    pub selsa: SelsaParams,
    pub eval: EvalParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            root: PathBuf::from("."),
            output: PathBuf::new(),
            stages: Stage::ALL.to_vec(),
            candidates: CandidateSource::Extract,
            patch_size: None,
            seed: 0,
            workers: 0,
            flow: FlowParams::default(),
            extract: ExtractParams::default(),
            stabilize: StabilizationParams::default(),
            videocut: VideoCutParams::default(),
            losses: LossParams::default(),
            schedule: ScheduleParams::default(),
            selsa: SelsaParams::default(),
            eval: EvalParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.extract.validate()?;
        self.stabilize.validate()?;
        self.videocut.validate()?;
        self.losses.validate()?;
        self.schedule.validate()?;
        if !(self.selsa.temperature > 0.0) {
            return Err(Error::Invalid("selsa temperature must be positive".into()));
        }
        if self.patch_size == Some(0) {
            return Err(Error::Invalid("patch-size must be positive".into()));
        }
        if self.eval.top_k_sweep.contains(&0) {
            return Err(Error::Invalid("top-k sweep values must be positive".into()));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        if self.output.as_os_str().is_empty() {
            self.root.join("out")
        } else {
            self.output.clone()
        }
    }

    /// SHA-256 of the config with location and worker count blanked, so
    /// the hash identifies what is computed rather than where or how fast.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.root = PathBuf::new();
        c.output = PathBuf::new();
        c.workers = 0;
        c.stages.clear();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    fn extract_params(&self) -> ExtractParams {
        ExtractParams {
            seed: self.seed,
            ..self.extract.clone()
        }
    }

    /// Frame pairs `(src, dst)` whose flow the later stages need.
    pub fn flow_pairs(&self, num_frames: usize) -> Vec<(usize, usize)> {
        let radius = self.stabilize.window_radius.max(1);
        let mut pairs = Vec::new();
        for dst in 0..num_frames {
            for src in reference_frames(dst, num_frames, radius) {
                pairs.push((src, dst));
            }
        }
        pairs.sort_unstable();
        pairs
    }
}

/// Frame files of one video, in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoInput {
    pub id: String,
    pub frames: Vec<PathBuf>,
    pub width: usize,
    pub height: usize,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Videos under `<root>/frames`, sorted by id.
pub fn discover_videos(root: &Path) -> Result<Vec<VideoInput>> {
    let mut videos = Vec::new();
    for dir in sorted_entries(&root.join("frames"))? {
        if !dir.is_dir() {
            continue;
        }
        let frames: Vec<PathBuf> = sorted_entries(&dir)?
            .into_iter()
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "vtk")))
            .collect();
        let Some(first) = frames.first() else { continue };
        let g = load_frame_gray(first)?;
        videos.push(VideoInput {
            id: file_name(&dir),
            frames,
            width: g.width,
            height: g.height,
        });
    }
    if videos.is_empty() {
        return Err(Error::Invalid(format!("no videos under {}", root.join("frames").display())));
    }
    Ok(videos)
}

pub fn flow_path(out: &Path, video: &str, src: usize, dst: usize) -> PathBuf {
    out.join("flow").join(video).join(format!("{src:06}-{dst:06}.vtk"))
}

fn stage_err(stage: Stage, video: &str, frame: usize) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Stage {
        stage: stage.name(),
        video: video.to_string(),
        frame,
        source: Box::new(e),
    }
}

fn run_flow_stage(cfg: &PipelineConfig, videos: &[VideoInput], out: &Path) -> Result<()> {
    for v in videos {
        let frames: Vec<Grid> = v
            .frames
            .iter()
            .enumerate()
            .map(|(t, p)| load_frame_gray(p).map_err(Error::from).map_err(stage_err(Stage::Flow, &v.id, t)))
            .collect::<Result<_>>()?;
        let pairs = cfg.flow_pairs(frames.len());
        info!("flow: {} pairs for {}", pairs.len(), v.id);
        pairs.par_iter().try_for_each(|&(s, d)| {
            let f = estimate_flow(&frames[s], &frames[d], &cfg.flow).map_err(stage_err(Stage::Flow, &v.id, d))?;
            write_tensor(&f.to_tensor(), flow_path(out, &v.id, s, d)).map_err(Error::from)
        })?;
    }
    Ok(())
}

/// Reads cached flows for the given pairs.
pub fn load_flows(out: &Path, video: &str, pairs: &[(usize, usize)]) -> Result<FlowMap> {
    pairs
        .par_iter()
        .map(|&(s, d)| {
            let p = flow_path(out, video, s, d);
            if !p.exists() {
                return Err(Error::MissingFlow {
                    video: video.to_string(),
                    src: s,
                    dst: d,
                });
            }
            Ok(((s, d), FlowField::from_tensor(&read_tensor(&p)?)?))
        })
        .collect()
}

fn load_features(cfg: &PipelineConfig, v: &VideoInput, frame: usize) -> Result<Vec<FeatureMap>> {
    let dir = cfg.root.join("features").join(&v.id);
    let prefix = format!("{frame:06}.");
    let fref = FrameRef::new(v.id.clone(), frame, v.width, v.height)?;
    let mut maps = Vec::new();
    for p in sorted_entries(&dir)? {
        let name = file_name(&p);
        let Some(backbone) = name.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".vtk")) else {
            continue;
        };
        let t = read_tensor(&p)?;
        let cols = *t.dims.get(1).unwrap_or(&1);
        let ps = cfg.patch_size.unwrap_or_else(|| v.width.div_ceil(cols.max(1)));
        maps.push(FeatureMap::from_tensor(&t, fref.clone(), backbone, ps)?);
    }
    if maps.is_empty() {
        return Err(Error::Invalid(format!("no features for {}/{frame:06} in {}", v.id, dir.display())));
    }
    Ok(maps)
}

const EXTRACT_LABELS: &str = "labels/extract.json";
const STABILIZED_LABELS: &str = "labels/stabilized.json";
const VIDEOCUT_LABELS: &str = "labels/videocut.json";

fn run_extract_stage(cfg: &PipelineConfig, videos: &[VideoInput], out: &Path) -> Result<()> {
    let labels_dir = out.join("labels");
    let set = match cfg.candidates {
        CandidateSource::File => {
            let src = cfg.root.join("candidates.json");
            let set = read_labels(&src)?;
            for v in videos {
                let lv = set
                    .video(&v.id)
                    .ok_or_else(|| Error::Invalid(format!("candidates.json has no video {}", v.id)))?;
                if lv.frames.len() != v.frames.len() || lv.width != v.width || lv.height != v.height {
                    return Err(Error::DimensionMismatch(format!(
                        "candidates for {} do not match its frames",
                        v.id
                    )));
                }
                if lv.frames.iter().flat_map(|f| &f.labels).any(|l| l.mask.is_some()) {
                    return Err(Error::Invalid("candidates.json masks are not supported".into()));
                }
            }
            PseudoLabelSet::new(videos.iter().map(|v| set.video(&v.id).unwrap().clone()).collect())
        }
        CandidateSource::Extract => {
            let params = cfg.extract_params();
            let mut out_videos = Vec::new();
            for v in videos {
                let frames: Vec<LabelFrame> = (0..v.frames.len())
                    .into_par_iter()
                    .map(|t| {
                        let feats = load_features(cfg, v, t).map_err(stage_err(Stage::Extract, &v.id, t))?;
                        let cands = extract_candidates(&feats, &params).map_err(stage_err(Stage::Extract, &v.id, t))?;
                        let mut labels = Vec::with_capacity(cands.len());
                        for (k, c) in cands.iter().enumerate() {
                            let rel = format!("masks/{}/{t:06}-{k:03}.vtk", v.id);
                            write_tensor(&c.mask.to_tensor(), labels_dir.join(&rel))?;
                            labels.push(Label {
                                mask: Some(rel),
                                ..Label::from_candidate(&c.candidate)
                            });
                        }
                        Ok(LabelFrame { index: t, labels })
                    })
                    .collect::<Result<_>>()?;
                out_videos.push(LabelVideo {
                    id: v.id.clone(),
                    width: v.width,
                    height: v.height,
                    frames,
                });
            }
            PseudoLabelSet::new(out_videos)
        }
    };
    write_json(&set, &out.join(EXTRACT_LABELS))
}

fn run_stabilize_stage(cfg: &PipelineConfig, videos: &[VideoInput], out: &Path) -> Result<()> {
    let raw = read_labels(&out.join(EXTRACT_LABELS))?;
    let mut out_videos = Vec::new();
    for v in videos {
        let lv = raw
            .video(&v.id)
            .ok_or_else(|| Error::Invalid(format!("no extracted labels for {}", v.id)))?;
        let flows = load_flows(out, &v.id, &cfg.flow_pairs(lv.frames.len()))?;
        let refs: Vec<FrameRef> = (0..lv.frames.len()).map(|t| lv.frame_ref(t)).collect::<Result<_>>()?;
        let stabilized = stabilize_sequence(&refs, &lv.candidates(), &flows, &cfg.stabilize)?;
        out_videos.push(LabelVideo {
            id: lv.id.clone(),
            width: lv.width,
            height: lv.height,
            frames: stabilized
                .iter()
                .enumerate()
                .map(|(t, cands)| LabelFrame {
                    index: t,
                    labels: cands.iter().map(Label::from_candidate).collect(),
                })
                .collect(),
        });
    }
    write_json(&PseudoLabelSet::new(out_videos), &out.join(STABILIZED_LABELS))
}

fn run_videocut_stage(cfg: &PipelineConfig, videos: &[VideoInput], out: &Path) -> Result<()> {
    let labels_dir = out.join("labels");
    let raw = read_labels(&out.join(EXTRACT_LABELS))?;
    let mut out_videos = Vec::new();
    for v in videos {
        let lv = raw
            .video(&v.id)
            .ok_or_else(|| Error::Invalid(format!("no extracted labels for {}", v.id)))?;
        let n = lv.frames.len();
        let pairs: Vec<(usize, usize)> = (1..n).map(|t| (t - 1, t)).collect();
        let flows = load_flows(out, &v.id, &pairs)?;
        // masks per frame; labels without one fall back to their filled box
        let per_frame: Vec<Vec<ScoredMask>> = lv
            .frames
            .iter()
            .map(|f| {
                f.labels
                    .iter()
                    .map(|l| {
                        let mask = match &l.mask {
                            Some(rel) => load_mask(&labels_dir, rel, lv.width, lv.height)?,
                            None => MaskGrid::from_box(lv.width, lv.height, &l.bbox),
                        };
                        Ok(ScoredMask { mask, score: l.score })
                    })
                    .filter(|m| m.as_ref().map_or(true, |m| m.mask.foreground_count() > 0))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let regions = run_videocut(&v.id, &per_frame, &flows, &cfg.videocut)?;

        let mut frames: Vec<LabelFrame> = (0..n).map(|t| LabelFrame { index: t, labels: Vec::new() }).collect();
        let mut entries: Vec<(usize, usize, Label)> = Vec::new();
        for r in &regions {
            for rf in r.surviving() {
                let src = lv.frames[rf.frame].labels.iter().filter(|l| {
                    l.mask.is_some() || MaskGrid::from_box(lv.width, lv.height, &l.bbox).foreground_count() > 0
                });
                let original = src.clone().nth(rf.input_index);
                entries.push((
                    rf.frame,
                    rf.input_index,
                    Label {
                        bbox: rf.bbox,
                        score: rf.score,
                        source: Source::Current,
                        mask: original.and_then(|l| l.mask.clone()),
                        region: Some(r.id),
                    },
                ));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        for (t, _, l) in entries {
            frames[t].labels.push(l);
        }
        out_videos.push(LabelVideo {
            id: lv.id.clone(),
            width: lv.width,
            height: lv.height,
            frames,
        });
    }
    write_json(&PseudoLabelSet::new(out_videos), &out.join(VIDEOCUT_LABELS))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricsFile {
    pub reports: BTreeMap<String, MetricReport>,
    /// `(k, AR@k)` on the raw candidates.
    pub top_k_sweep: Vec<(usize, Option<f64>)>,
}

fn run_eval_stage(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let gt_path = cfg.root.join("gt.json");
    let gt = read_ground_truth(&gt_path)?;
    let gt_base = cfg.root.clone();
    let labels_dir = out.join("labels");
    let mut reports = BTreeMap::new();
    let mut sweep = Vec::new();
    for (name, rel) in [("extract", EXTRACT_LABELS), ("stabilized", STABILIZED_LABELS), ("videocut", VIDEOCUT_LABELS)] {
        let path = out.join(rel);
        if !path.exists() {
            continue;
        }
        let preds = read_labels(&path)?;
        let frames = eval_frames(&preds, &labels_dir, &gt, &gt_base)?;
        if name == "extract" {
            let flat: Vec<_> = frames.iter().flatten().cloned().collect();
            sweep = top_k_sweep(&flat, &cfg.eval.top_k_sweep);
        }
        reports.insert(name.to_string(), evaluate(&frames));
    }
    let metrics = MetricsFile {
        reports,
        top_k_sweep: sweep,
    };
    write_json(&metrics, &out.join("metrics.json"))?;
    let mut text = String::new();
    for (name, r) in &metrics.reports {
        text.push_str(&format!("[{name}]\n{}\n", r.to_table()));
    }
    fs::write(out.join("metrics.txt"), text).map_err(|e| Error::io(out.join("metrics.txt"), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Manifest {
    pub version: u32,
    pub config_hash: String,
    /// Stage name -> relative path -> SHA-256.
    pub stages: BTreeMap<String, BTreeMap<String, String>>,
}

fn stage_of(rel: &str) -> Option<Stage> {
    if rel.starts_with("flow/") {
        Some(Stage::Flow)
    } else if rel == EXTRACT_LABELS || rel.starts_with("labels/masks/") {
        Some(Stage::Extract)
    } else if rel == STABILIZED_LABELS {
        Some(Stage::Stabilize)
    } else if rel == VIDEOCUT_LABELS {
        Some(Stage::Videocut)
    } else if rel.starts_with("metrics.") {
        Some(Stage::Eval)
    } else {
        None
    }
}

fn walk(dir: &Path, base: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    for p in sorted_entries(dir)? {
        if p.is_dir() {
            walk(&p, base, out)?;
        } else {
            let rel = p.strip_prefix(base).expect("walk stays under base");
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.push((rel, p));
        }
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes every stage output currently in `out`.
pub fn build_manifest(cfg: &PipelineConfig, out: &Path) -> Result<Manifest> {
    let mut files = Vec::new();
    walk(out, out, &mut files)?;
    let mut stages: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for (rel, path) in files {
        if let Some(stage) = stage_of(&rel) {
            stages
                .entry(stage.name().to_string())
                .or_default()
                .insert(rel, sha256_file(&path)?);
        }
    }
    Ok(Manifest {
        version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        stages,
    })
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start {workers} workers: {e}")))
}

/// Runs the given stages in pipeline order on a pool of `cfg.workers`
/// threads, then rewrites the manifest.
pub fn run_stages(cfg: &PipelineConfig, stages: &[Stage]) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.output_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut order: Vec<Stage> = stages.to_vec();
    order.sort();
    order.dedup();
    let videos = discover_videos(&cfg.root)?;
    thread_pool(cfg.workers)?.install(|| {
        for stage in order {
            info!("stage {}", stage.name());
            match stage {
                Stage::Flow => run_flow_stage(cfg, &videos, &out)?,
                Stage::Extract => run_extract_stage(cfg, &videos, &out)?,
                Stage::Stabilize => run_stabilize_stage(cfg, &videos, &out)?,
                Stage::Videocut => run_videocut_stage(cfg, &videos, &out)?,
                Stage::Eval => run_eval_stage(cfg, &out)?,
            }
        }
        let manifest = build_manifest(cfg, &out)?;
        write_json(&manifest, &out.join("manifest.json"))?;
        Ok(manifest)
    })
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    run_stages(cfg, &cfg.stages)
}

/// Writes synthetic videos as a dataset root: frames, features, raw
/// candidates and ground truth with masks.
pub fn write_synthetic_dataset(root: &Path, scene: &SyntheticScene, num_videos: usize, seed: u64) -> Result<Vec<SyntheticVideo>> {
    let mut videos = Vec::new();
    let mut cand_videos = Vec::new();
    let mut gt_videos = Vec::new();
    for i in 0..num_videos {
        let id = format!("synth{i:03}");
        let v = generate_synthetic(scene, &id, seed.wrapping_add(i as u64))?;
        for (t, f) in v.frames.iter().enumerate() {
            write_pgm(root.join("frames").join(&id).join(format!("{t:06}.pgm")), v.width, v.height, &grid_to_u8(f))?;
            for fm in &v.features[t] {
                write_tensor(
                    &fm.to_tensor(),
                    root.join("features").join(&id).join(format!("{t:06}.{}.vtk", fm.backbone)),
                )?;
            }
        }
        cand_videos.push(LabelVideo {
            id: id.clone(),
            width: v.width,
            height: v.height,
            frames: v
                .candidates
                .iter()
                .enumerate()
                .map(|(t, c)| LabelFrame {
                    index: t,
                    labels: c.iter().map(Label::from_candidate).collect(),
                })
                .collect(),
        });
        let mut frames = Vec::new();
        for (t, objs) in v.gt.iter().enumerate() {
            let mut objects = Vec::new();
            for o in objs {
                let rel = o.mask.as_ref().map(|m| {
                    let rel = format!("gt_masks/{id}/{t:06}-{:03}.vtk", o.id);
                    (rel, m)
                });
                if let Some((rel, m)) = &rel {
                    write_tensor(&m.to_tensor(), root.join(rel))?;
                }
                objects.push(GtEntry {
                    id: o.id,
                    bbox: o.bbox,
                    mask: rel.map(|r| r.0),
                });
            }
            frames.push(GtFrame { index: t, objects });
        }
        gt_videos.push(GtVideo {
            id,
            width: v.width,
            height: v.height,
            frames,
        });
        videos.push(v);
    }
    write_json(&PseudoLabelSet::new(cand_videos), &root.join("candidates.json"))?;
    write_json(
        &GroundTruthSet {
            version: SCHEMA_VERSION,
            videos: gt_videos,
        },
        &root.join("gt.json"),
    )?;
    Ok(videos)
}

/// Box colors by source tag.
pub fn palette(source: Source) -> [u8; 3] {
    match source {
        Source::Current => [0, 220, 0],
        Source::WarpedReference => [160, 160, 160],
        Source::Fused => [255, 140, 0],
        Source::Detector => [0, 140, 255],
    }
}

/// Draws one label set over its frames as PPM files
/// `<out>/<video>/<frame:06>.ppm`. Boxes are 1-px outlines at their clamped
/// integer coordinates; masks add a contour in the same color.
pub fn emit_overlays(frames_root: &Path, labels: &PseudoLabelSet, labels_base: &Path, out: &Path) -> Result<()> {
    for v in &labels.videos {
        let frame_files = sorted_entries(&frames_root.join(&v.id))?;
        for f in &v.frames {
            let src = frame_files
                .iter()
                .find(|p| file_name(p).starts_with(&format!("{:06}.", f.index)))
                .ok_or_else(|| Error::Invalid(format!("missing frame {}/{:06}", v.id, f.index)))?;
            let (w, h, mut px) = match read_rgb(src) {
                Ok(img) => img,
                Err(_) => {
                    let g = load_frame_gray(src)?;
                    (g.width, g.height, grid_to_u8(&g).iter().flat_map(|&p| [p, p, p]).collect())
                }
            };
            for l in &f.labels {
                let color = palette(l.source);
                let mut put = |x: usize, y: usize| {
                    if x < w && y < h {
                        px[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&color);
                    }
                };
                if let Some(rel) = &l.mask {
                    let m = load_mask(labels_base, rel, w, h)?;
                    for y in 0..h {
                        for x in 0..w {
                            let edge = m.is_fg(x, y)
                                && (x == 0 || y == 0 || x + 1 == w || y + 1 == h
                                    || !m.is_fg(x - 1, y) || !m.is_fg(x + 1, y)
                                    || !m.is_fg(x, y - 1) || !m.is_fg(x, y + 1));
                            if edge {
                                put(x, y);
                            }
                        }
                    }
                }
                let x1 = (l.bbox.x1.floor().max(0.0) as usize).min(w - 1);
                let y1 = (l.bbox.y1.floor().max(0.0) as usize).min(h - 1);
                let x2 = ((l.bbox.x2.ceil() as usize).saturating_sub(1)).clamp(x1, w - 1);
                let y2 = ((l.bbox.y2.ceil() as usize).saturating_sub(1)).clamp(y1, h - 1);
                for x in x1..=x2 {
                    put(x, y1);
                    put(x, y2);
                }
                for y in y1..=y2 {
                    put(x1, y);
                    put(x2, y);
                }
            }
            write_ppm(out.join(&v.id).join(format!("{:06}.ppm", f.index)), w, h, &px)?;
        }
    }
    Ok(())
}
