//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analytics::{coherence_stats, evaluate};
use crate::error::{Error, Result};
use crate::heads::AnchorConfig;
use crate::inference::{run_clip, ClipPartitionConfig};
use crate::io::synth::{synth_generate, SynthParams};
use crate::io::{AnnotationSet, Container, EngineConfig, ResultsFile};
use crate::pipeline::infer_and_track;
use crate::primitives::rle_encode;
use crate::training::{clip_losses, summarize_losses};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cico", version, about = "Clip-level video instance segmentation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate moving-shape videos, annotations and oracle network outputs.
    Synth(SynthArgs),
    /// Turn network outputs into tracked per-video results.
    Infer(InferArgs),
    /// Evaluate the training losses of regression-form network outputs.
    Loss(LossArgs),
    /// Score results against ground truth.
    Eval(EvalArgs),
    /// Temporal box and mask coherence of ground-truth annotations.
    Coherence(CoherenceArgs),
    /// Run one clip through inference and dump its detections.
    Assemble(AssembleArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    videos: usize,
    #[arg(long, default_value_t = 12)]
    frames: usize,
    #[arg(long, default_value_t = 3)]
    shapes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 96)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    /// Clip length T.
    #[arg(long, default_value_t = 3)]
    clip_length: usize,
    /// Frames shared by consecutive clips.
    #[arg(long, default_value_t = 1)]
    overlap: usize,
    /// Let shapes cross and occlude each other.
    #[arg(long)]
    crossings: bool,
    /// Write per-anchor box regression (default anchors) instead of decoded boxes.
    #[arg(long)]
    regression: bool,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    netout: PathBuf,
    /// Engine config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Write one JSON line per association decision.
    #[arg(long)]
    dump_track: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Args)]
struct LossArgs {
    #[arg(long)]
    netout: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    results: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CoherenceArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 4)]
    delta_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AssembleArgs {
    #[arg(long)]
    netout: PathBuf,
    /// Position of the clip in the container.
    #[arg(long)]
    clip: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    path.map_or_else(|| Ok(EngineConfig::default()), EngineConfig::read)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::format("json output", e.to_string()))
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e)),
    }
}

fn synth(a: &SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    let params = SynthParams {
        videos: a.videos,
        frames: a.frames,
        shapes: a.shapes,
        image_height: a.height,
        image_width: a.width,
        crossings: a.crossings,
        seed: a.seed,
        partition: ClipPartitionConfig {
            length: a.clip_length,
            overlap: a.overlap,
        },
        regression: a.regression.then(AnchorConfig::default),
        ..SynthParams::default()
    };
    let out = synth_generate(&params)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    out.annotations.write(a.out.join("annotations.json"))?;
    out.netout.write(a.out.join("netout.cco"))?;
    out.config.write(a.out.join("config.toml"))?;
    writeln!(
        stdout,
        "wrote {} videos, {} annotations, {} clips to {}",
        out.annotations.videos.len(),
        out.annotations.annotations.len(),
        out.netout.clips().len(),
        a.out.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn infer(a: &InferArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let container = Container::read(&a.netout)?;
    let out = infer_and_track(&container, &cfg, a.workers)?;
    out.results.write(&a.out)?;
    if let Some(path) = &a.dump_track {
        let mut lines = String::new();
        for assoc in &out.associations {
            lines.push_str(&serde_json::to_string(assoc).map_err(|e| Error::format("track dump", e.to_string()))?);
            lines.push('\n');
        }
        std::fs::write(path, lines).map_err(|e| Error::io(path, e))?;
    }
    writeln!(stdout, "wrote {} tracks to {}", out.results.0.len(), a.out.display())
        .map_err(|e| Error::io("<stdout>", e))
}

#[derive(Serialize)]
struct LossReport {
    clips: Vec<crate::training::ClipLosses>,
    cls: f64,
    reg: f64,
    mask: f64,
    track: f64,
    total: f64,
}

fn loss(a: &LossArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let container = Container::read(&a.netout)?;
    let gt = AnnotationSet::read(&a.gt)?;
    let mut clips = Vec::with_capacity(container.clips().len());
    for i in 0..container.clips().len() {
        let net = container.clip(i)?;
        let m = &net.meta;
        let clip_gt = gt.clip(m.video_id, m.frame_start, m.frame_end)?;
        clips.push(clip_losses(&net, &clip_gt, &cfg.matcher)?);
    }
    let (c, total) = summarize_losses(&clips, &cfg.loss_weights)?;
    let report = LossReport {
        clips,
        cls: c.cls,
        reg: c.reg,
        mask: c.mask,
        track: c.track,
        total,
    };
    emit(&to_json(&report)?, None, stdout)
}

fn eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let gt = AnnotationSet::read(&a.gt)?;
    let results = ResultsFile::read(&a.results)?;
    let report = evaluate(&results, &gt)?;
    emit(&to_json(&report)?, a.out.as_deref(), stdout)
}

fn coherence(a: &CoherenceArgs, stdout: &mut dyn Write) -> Result<()> {
    let gt = AnnotationSet::read(&a.gt)?;
    let report = coherence_stats(&gt, a.delta_max)?;
    emit(&to_json(&report)?, a.out.as_deref(), stdout)
}

#[derive(Serialize)]
struct DetectionDump {
    anchor: usize,
    category_id: u32,
    score: f64,
    circumscribed_box: [f64; 4],
    segmentations: Vec<crate::primitives::Rle>,
}

fn assemble(a: &AssembleArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let container = Container::read(&a.netout)?;
    let net = container.clip(a.clip)?;
    let dets = run_clip(&net, &cfg.inference)?;
    let dump: Vec<DetectionDump> = dets
        .iter()
        .map(|d| DetectionDump {
            anchor: d.anchor,
            category_id: d.category,
            score: d.score,
            circumscribed_box: d.cbox.to_xywh(),
            segmentations: d.masks.frames().iter().map(rle_encode).collect(),
        })
        .collect();
    emit(&to_json(&dump)?, a.out.as_deref(), stdout)
}

/// Parse `argv` and run the chosen subcommand. Returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth(a, stdout),
        Command::Infer(a) => infer(a, stdout),
        Command::Loss(a) => loss(a, stdout),
        Command::Eval(a) => eval(a, stdout),
        Command::Coherence(a) => coherence(a, stdout),
        Command::Assemble(a) => assemble(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_INVALID
            }
        }
    }
}
