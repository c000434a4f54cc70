use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use stablabel::distill::{batch_losses, teacher_filter, DistillSample};
use stablabel::eval::{evaluate, top_k_sweep};
use stablabel::flow::estimate_flow;
use stablabel::labels::{eval_frames, read_ground_truth, read_json, read_labels, write_json};
use stablabel::pipeline::{emit_overlays, run_stages, write_synthetic_dataset, PipelineConfig, Stage};
use stablabel::selsa::{selsa_aggregate, AggregationBatch, FeatureRows};
use stablabel::synth::SyntheticScene;
use stablabel::tensor_io::{load_frame_gray, read_tensor, write_tensor, MaskGrid, TensorFile};

#[derive(Parser)]
#[command(name = "stablabel", version, about = "Temporally stabilized pseudo-labels for unlabeled video")]
struct Cli {
    /// Pipeline config (JSON); unspecified fields take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the dataset root
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    /// Overrides the output directory
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Print the effective config with every default filled in, then exit
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Flow-guided box stabilization
    Stabilize,
    /// Mask warping with temporal gating and background removal
    Videocut,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured stages in order
    Run {
        /// Labeling stage to run after extraction
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Estimate flow for the dataset, or for one frame pair with --pair
    Flow {
        #[arg(long, num_args = 2, value_names = ["PREV", "NEXT"])]
        pair: Option<Vec<PathBuf>>,
        /// Output tensor for --pair
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Extract candidates from feature maps
    Extract,
    /// Stabilize extracted candidates with cached flows
    Stabilize,
    /// Run the mask-warping baseline on extracted candidates
    Videocut,
    /// Batch distillation losses as JSON lines, one per sample, then the mean
    Losses {
        /// JSON list of {student, teacher, student-score, teacher-score}
        #[arg(long)]
        samples: PathBuf,
        /// Drop samples whose teacher score is not above this value
        #[arg(long)]
        teacher_threshold: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Aggregate key-frame RoI features over support frames
    Selsa {
        /// Key features, dims [n, d]
        #[arg(long)]
        key: PathBuf,
        /// Support features, dims [m_i, d] each
        #[arg(long, required = true, num_args = 1..)]
        support: Vec<PathBuf>,
        /// Overrides the config temperature
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate a label set against ground truth; without --pred runs the eval stage
    Eval {
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Average recall of the top-k candidates per frame for several k
    SweepTopk {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Overrides the config sweep
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Write a synthetic dataset root
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        videos: usize,
        /// Scene description (JSON); defaults to the built-in two-object scene
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Draw labels over their frames as PPM images
    Overlay {
        #[arg(long)]
        labels: PathBuf,
        /// Directory holding <video>/<frame>.pgm
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => read_json::<PipelineConfig>(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(r) = &cli.root {
        cfg.root = r.clone();
    }
    if let Some(o) = &cli.output {
        cfg.output = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(text: std::fmt::Arguments) -> anyhow::Result<()> {
    std::io::stdout().lock().write_fmt(text)?;
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    emit(format_args!("{}\n", serde_json::to_string_pretty(value)?))
}

fn run_named(cfg: &PipelineConfig, stages: &[Stage]) -> anyhow::Result<()> {
    let manifest = run_stages(cfg, stages)?;
    for (stage, files) in &manifest.stages {
        log::info!("{stage}: {} files", files.len());
    }
    emit(format_args!("{}\n", cfg.output_dir().join("manifest.json").display()))
}

fn losses(samples: &Path, threshold: Option<f64>, out: Option<&Path>, cfg: &PipelineConfig) -> anyhow::Result<()> {
    #[derive(serde::Deserialize)]
    #[serde(rename_all = "kebab-case", deny_unknown_fields)]
    struct Entry {
        student: PathBuf,
        teacher: PathBuf,
        student_score: f64,
        teacher_score: f64,
    }
    let entries: Vec<Entry> = read_json(samples)?;
    let base = samples.parent().unwrap_or(Path::new("."));
    let mut batch = Vec::with_capacity(entries.len());
    for e in &entries {
        let s = MaskGrid::from_tensor(&read_tensor(base.join(&e.student))?)?;
        let t = MaskGrid::from_tensor(&read_tensor(base.join(&e.teacher))?)?;
        batch.push(DistillSample::new(s, &t, e.student_score, e.teacher_score)?);
    }
    if let Some(thr) = threshold {
        batch = teacher_filter(&batch, thr);
    }
    let (each, mean) = batch_losses(&batch, &cfg.losses)?;
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    for (i, b) in each.iter().enumerate() {
        writeln!(sink, "{}", json!({"sample": i, "losses": b}))?;
    }
    writeln!(sink, "{}", json!({"mean": mean, "count": each.len()}))?;
    Ok(())
}

fn rows(t: &TensorFile) -> anyhow::Result<FeatureRows> {
    let [n, d] = t.dims[..] else {
        bail!("expected a [n, d] tensor, got dims {:?}", t.dims);
    };
    Ok(FeatureRows::new(n, d, t.to_f64())?)
}

fn selsa(key: &Path, support: &[PathBuf], temperature: f64, out: &Path) -> anyhow::Result<()> {
    let keys = rows(&read_tensor(key)?)?;
    let mut data = Vec::new();
    let mut count = 0;
    let mut dim = keys.dim;
    for p in support {
        let r = rows(&read_tensor(p)?)?;
        dim = r.dim;
        count += r.rows;
        data.extend_from_slice(&r.data);
    }
    let supports = FeatureRows::new(count, dim, data)?;
    let agg = selsa_aggregate(&AggregationBatch::new(keys, supports, temperature)?);
    let values = agg.data.iter().map(|&v| v as f32).collect();
    write_tensor(&TensorFile::f32(vec![agg.rows, agg.dim], values)?, out)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    if cli.print_config {
        return print_json(&cfg);
    }
    let Some(command) = cli.command else {
        bail!(stablabel::Error::Invalid("no subcommand given; see --help".into()));
    };
    match command {
        Command::Run { method } => {
            let mut stages = cfg.stages.clone();
            match method {
                Some(Method::Stabilize) => stages.retain(|s| *s != Stage::Videocut),
                Some(Method::Videocut) => stages.retain(|s| *s != Stage::Stabilize),
                None => {}
            }
            run_named(&cfg, &stages)
        }
        Command::Flow { pair: Some(pair), out } => {
            let Some(out) = out else {
                bail!(stablabel::Error::Invalid("--pair needs --out".into()));
            };
            let prev = load_frame_gray(&pair[0])?;
            let next = load_frame_gray(&pair[1])?;
            let flow = estimate_flow(&prev, &next, &cfg.flow)?;
            write_tensor(&flow.to_tensor(), &out)?;
            Ok(())
        }
        Command::Flow { pair: None, .. } => run_named(&cfg, &[Stage::Flow]),
        Command::Extract => run_named(&cfg, &[Stage::Extract]),
        Command::Stabilize => run_named(&cfg, &[Stage::Stabilize]),
        Command::Videocut => run_named(&cfg, &[Stage::Videocut]),
        Command::Eval { pred: None, .. } => run_named(&cfg, &[Stage::Eval]),
        Command::Eval { pred: Some(pred), gt, out } => {
            let gt_path = gt.expect("clap enforces --gt");
            let preds = read_labels(&pred)?;
            let gt = read_ground_truth(&gt_path)?;
            let frames = eval_frames(
                &preds,
                pred.parent().unwrap_or(Path::new(".")),
                &gt,
                gt_path.parent().unwrap_or(Path::new(".")),
            )?;
            let report = evaluate(&frames);
            match out {
                Some(p) => write_json(&report, &p)?,
                None => emit(format_args!("{}", report.to_table()))?,
            }
            Ok(())
        }
        Command::SweepTopk { pred, gt: gt_path, ks } => {
            let preds = read_labels(&pred)?;
            let gt = read_ground_truth(&gt_path)?;
            let frames = eval_frames(
                &preds,
                pred.parent().unwrap_or(Path::new(".")),
                &gt,
                gt_path.parent().unwrap_or(Path::new(".")),
            )?;
            let flat: Vec<_> = frames.into_iter().flatten().collect();
            let ks = ks.unwrap_or_else(|| cfg.eval.top_k_sweep.clone());
            if ks.contains(&0) {
                bail!(stablabel::Error::Invalid("k must be positive".into()));
            }
            for (k, ar) in top_k_sweep(&flat, &ks) {
                match ar {
                    Some(v) => emit(format_args!("{k}\t{v:.6}\n"))?,
                    None => emit(format_args!("{k}\tnan\n"))?,
                }
            }
            Ok(())
        }
        Command::Losses {
            samples,
            teacher_threshold,
            out,
        } => losses(&samples, teacher_threshold, out.as_deref(), &cfg),
        Command::Selsa {
            key,
            support,
            temperature,
            out,
        } => selsa(&key, &support, temperature.unwrap_or(cfg.selsa.temperature), &out),
        Command::Synth { out, videos, scene } => {
            let scene = match scene {
                Some(p) => read_json::<SyntheticScene>(&p)?,
                None => SyntheticScene::default(),
            };
            write_synthetic_dataset(&out, &scene, videos, cfg.seed)?;
            Ok(())
        }
        Command::Overlay { labels, frames, out } => {
            let set = read_labels(&labels)?;
            emit_overlays(&frames, &set, labels.parent().unwrap_or(Path::new(".")), &out)?;
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| match e.downcast_ref::<stablabel::Error>() {
        Some(e) => e.is_validation(),
        None => e.downcast_ref::<serde_json::Error>().is_some(),
    });
    if validation {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed stdout (e.g. piped into head) is not a failure
        Err(e)
            if e.chain()
                .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
