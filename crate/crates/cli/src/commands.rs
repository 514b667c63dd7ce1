use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ssr_core::framedata::{frame_dir_name, pfm, render_dataset, Dataset, Split};
use ssr_core::metrics::{self, tonemap};
use ssr_core::params::ModelParams;
use ssr_core::pathtracer::{bench_sampling, load_scene, SamplingMode, Scene, BUILTIN_SCENES};
use ssr_core::trainer::{self, TrainConfig, CHECKPOINT_FILE};

use crate::config::Layers;
use crate::images::{hstack, to_rgb, write_png};
use crate::{CliError, Common};

fn runtime(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(runtime(dir))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(runtime(path))
}

/// Resolved configuration and environment of a run. Contains nothing that varies between identical runs.
fn write_run_json(out: &Path, command: &str, config: &Value) -> Result<(), CliError> {
    let run = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "config": config,
    });
    write_text(&out.join("run.json"), &(serde_json::to_string_pretty(&run).expect("json") + "\n"))
}

fn required(path: &Path, key: &str) -> Result<(), CliError> {
    if path.as_os_str().is_empty() {
        return Err(CliError::Config(format!("`{key}` is required")));
    }
    Ok(())
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    Ok(s.parse::<Split>()?)
}

fn scene_with(name: &str, width: Option<usize>, height: Option<usize>) -> Result<Scene, CliError> {
    let scene = load_scene(name)?;
    let (w, h) = (width.unwrap_or(scene.width), height.unwrap_or(scene.height));
    if w == 0 || h == 0 {
        return Err(CliError::Config(format!("resolution {w}x{h} is empty")));
    }
    Ok(scene.with_resolution(w, h))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    /// Built-in scene name or path to a scene JSON file.
    pub scene: String,
    /// Defaults to the scene's own frame count.
    pub frames: Option<usize>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    /// `quarter` or `full:<spp>`.
    pub mode: String,
    /// Also render a reference with this many samples per pixel.
    pub reference_spp: Option<u32>,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            scene: "cornell-motion".into(),
            frames: None,
            width: None,
            height: None,
            mode: "quarter".into(),
            reference_spp: None,
            seed: 0,
        }
    }
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// `quarter` or `full:<spp>`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    reference_spp: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset directory to create.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn render(a: RenderArgs) -> Result<(), CliError> {
    let (cfg, value): (RenderConfig, _) = Layers::new::<RenderConfig>()
        .file(a.common.config.as_deref())?
        .flag("scene", a.scene)?
        .flag("frames", a.frames)?
        .flag("width", a.width)?
        .flag("height", a.height)?
        .flag("mode", a.mode)?
        .flag("reference_spp", a.reference_spp)?
        .flag("seed", a.seed)?
        .sets(&a.common.sets)?
        .build()?;
    let mode: SamplingMode = cfg.mode.parse()?;
    if cfg.reference_spp == Some(0) {
        return Err(CliError::Config("reference_spp must be positive".into()));
    }
    let scene = scene_with(&cfg.scene, cfg.width, cfg.height)?;
    let frames = cfg.frames.unwrap_or(scene.frames);
    if frames == 0 {
        return Err(CliError::Config("frames must be positive".into()));
    }
    create_dir(&a.out)?;
    let t = Instant::now();
    render_dataset(&scene, &a.out, frames, mode, cfg.reference_spp, cfg.seed, |i| {
        eprintln!("rendered frame {}/{frames}", i + 1)
    })?;
    write_run_json(&a.out, "render", &value)?;
    eprintln!("{frames} frames in {:.1}s -> {}", t.elapsed().as_secs_f64(), a.out.display());
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Disable a model component: no_tfa, no_warped_prev, no_shadow, no_transparent. Repeatable.
    #[arg(long, value_name = "NAME")]
    ablation: Vec<String>,
    /// Directory for checkpoints, the training log and run.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut layers = Layers::new::<TrainConfig>()
        .file(a.common.config.as_deref())?
        .flag("dataset", a.dataset)?
        .flag("steps", a.steps)?
        .flag("batch_size", a.batch_size)?
        .flag("crop", a.crop)?
        .flag("learning_rate", a.lr)?
        .flag("seed", a.seed)?
        .flag("checkpoint_every", a.checkpoint_every)?;
    for name in &a.ablation {
        layers = layers.flag(&format!("ablation.{name}"), Some(true))?;
    }
    let (cfg, value): (TrainConfig, _) = layers.sets(&a.common.sets)?.build()?;
    required(&cfg.dataset, "dataset")?;
    cfg.validate()?;
    let dataset = Dataset::load(&cfg.dataset)?;
    create_dir(&a.out)?;
    write_run_json(&a.out, "train", &value)?;
    let t = Instant::now();
    let every = (cfg.steps / 20).max(1);
    let result = trainer::train(&cfg, &dataset, Some(&a.out), |row| {
        if row.step % every == 0 || row.step + 1 == cfg.steps {
            eprintln!(
                "step {}/{} lr {:.2e} loss {:.5} ({:.0}s)",
                row.step + 1,
                cfg.steps,
                row.lr,
                row.total,
                t.elapsed().as_secs_f64()
            );
        }
    });
    match result {
        Ok(_) => {
            eprintln!("checkpoint: {}", a.out.join(CHECKPOINT_FILE).display());
            Ok(())
        }
        Err(e @ ssr_core::Error::Diverged { .. }) => Err(CliError::Runtime(format!(
            "{e}; last good checkpoint kept at {}",
            a.out.join(CHECKPOINT_FILE).display()
        ))),
        Err(e) => Err(e.into()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub split: String,
    /// Also write the accumulator's per-pixel history weight as `alpha_NNNN.pfm`.
    pub dump_alpha: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self { checkpoint: PathBuf::new(), dataset: PathBuf::new(), split: "test".into(), dump_alpha: false }
    }
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    dump_alpha: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn infer(a: InferArgs) -> Result<(), CliError> {
    let (cfg, value): (InferConfig, _) = Layers::new::<InferConfig>()
        .file(a.common.config.as_deref())?
        .flag("checkpoint", a.checkpoint)?
        .flag("dataset", a.dataset)?
        .flag("split", a.split)?
        .flag("dump_alpha", a.dump_alpha.then_some(true))?
        .sets(&a.common.sets)?
        .build()?;
    required(&cfg.checkpoint, "checkpoint")?;
    required(&cfg.dataset, "dataset")?;
    let split = parse_split(&cfg.split)?;
    let params = ModelParams::load(&cfg.checkpoint)?;
    let dataset = Dataset::load(&cfg.dataset)?;
    create_dir(&a.out)?;
    let mut count = 0;
    trainer::infer(&params, &dataset, split, |img| {
        let stem = a.out.join(format!("frame_{:04}", img.frame));
        write_png(&stem.with_extension("png"), &img.model).map_err(cli_to_core)?;
        pfm::write(&stem.with_extension("pfm"), &img.model)?;
        pfm::write(&a.out.join(format!("baseline_{:04}.pfm", img.frame)), &img.baseline)?;
        if cfg.dump_alpha {
            if let Some(alpha) = &img.alpha {
                pfm::write(&a.out.join(format!("alpha_{:04}.pfm", img.frame)), alpha)?;
            }
        }
        count += 1;
        Ok(())
    })?;
    if cfg.dump_alpha && params.get("acc.ref.0.weight").is_none() {
        eprintln!("note: the checkpoint has no accumulator, so no alpha maps were written");
    }
    write_run_json(&a.out, "infer", &value)?;
    eprintln!("{count} frames -> {}", a.out.display());
    Ok(())
}

fn cli_to_core(e: CliError) -> ssr_core::Error {
    match e {
        CliError::Config(m) => ssr_core::Error::Config(m),
        CliError::Runtime(m) => ssr_core::Error::Invalid(m),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub split: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { checkpoint: PathBuf::new(), dataset: PathBuf::new(), split: "test".into() }
    }
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Directory for metrics.csv, summary.json and run.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let (cfg, value): (EvalConfig, _) = Layers::new::<EvalConfig>()
        .file(a.common.config.as_deref())?
        .flag("checkpoint", a.checkpoint)?
        .flag("dataset", a.dataset)?
        .flag("split", a.split)?
        .sets(&a.common.sets)?
        .build()?;
    required(&cfg.checkpoint, "checkpoint")?;
    required(&cfg.dataset, "dataset")?;
    let split = parse_split(&cfg.split)?;
    let params = ModelParams::load(&cfg.checkpoint)?;
    let dataset = Dataset::load(&cfg.dataset)?;
    let report = trainer::evaluate(&params, &dataset, split, |_| Ok(()))?;
    create_dir(&a.out)?;
    write_text(&a.out.join("metrics.csv"), &report.csv())?;
    let summary = json!({
        "split": report.split,
        "ablation": report.ablation,
        "frames": report.frames.len(),
        "model": report.mean_model,
        "baseline": report.mean_baseline,
        "psnr_gain_db": report.mean_model.psnr - report.mean_baseline.psnr,
    });
    let text = serde_json::to_string_pretty(&summary).expect("json") + "\n";
    write_text(&a.out.join("summary.json"), &text)?;
    write_run_json(&a.out, "eval", &value)?;
    print!("{text}");
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// One scene; every built-in scene when absent.
    pub scene: Option<String>,
    pub frames: usize,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { scene: None, frames: 20, width: None, height: None, seed: 0 }
    }
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

pub fn bench(a: BenchArgs) -> Result<(), CliError> {
    let (cfg, _): (BenchConfig, _) = Layers::new::<BenchConfig>()
        .file(a.common.config.as_deref())?
        .flag("scene", a.scene)?
        .flag("frames", a.frames)?
        .flag("width", a.width)?
        .flag("height", a.height)?
        .flag("seed", a.seed)?
        .sets(&a.common.sets)?
        .build()?;
    if cfg.frames < 10 {
        return Err(CliError::Config(format!("bench needs at least 10 frames, got {}", cfg.frames)));
    }
    let names: Vec<String> = match &cfg.scene {
        Some(s) => vec![s.clone()],
        None => BUILTIN_SCENES.iter().map(|s| s.to_string()).collect(),
    };
    let mut reports = Vec::new();
    for name in &names {
        let scene = scene_with(name, cfg.width, cfg.height)?;
        reports.push(bench_sampling(&scene, cfg.frames, cfg.seed)?);
    }
    let out = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        serde_json::to_string_pretty(&reports)
    };
    println!("{}", out.expect("json"));
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiguresConfig {
    pub dataset: PathBuf,
    /// Output directory of `ssr infer`.
    pub predictions: PathBuf,
    pub split: String,
    /// Frames to show; every frame of the split when empty.
    pub frames: Vec<usize>,
}

impl Default for FiguresConfig {
    fn default() -> Self {
        Self { dataset: PathBuf::new(), predictions: PathBuf::new(), split: "test".into(), frames: Vec::new() }
    }
}

#[derive(Args)]
pub struct FiguresArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Comma-separated frame indices.
    #[arg(long, value_delimiter = ',')]
    frames: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn figures(a: FiguresArgs) -> Result<(), CliError> {
    let (cfg, value): (FiguresConfig, _) = Layers::new::<FiguresConfig>()
        .file(a.common.config.as_deref())?
        .flag("dataset", a.dataset)?
        .flag("predictions", a.predictions)?
        .flag("split", a.split)?
        .flag("frames", a.frames)?
        .sets(&a.common.sets)?
        .build()?;
    required(&cfg.dataset, "dataset")?;
    required(&cfg.predictions, "predictions")?;
    let split = parse_split(&cfg.split)?;
    let dataset = Dataset::load(&cfg.dataset)?;
    let frames = if cfg.frames.is_empty() { dataset.manifest.indices(split) } else { cfg.frames.clone() };
    if let Some(&f) = frames.iter().find(|&&f| f >= dataset.frames.len()) {
        return Err(CliError::Config(format!("frame {f} is not in the dataset ({} frames)", dataset.frames.len())));
    }
    let mut missing = Vec::new();
    for &f in &frames {
        for name in [format!("frame_{f:04}.pfm"), format!("baseline_{f:04}.pfm")] {
            let p = cfg.predictions.join(name);
            if !p.is_file() {
                missing.push(p.display().to_string());
            }
        }
        if dataset.frames[f].reference.is_none() {
            missing.push(cfg.dataset.join(frame_dir_name(f)).join("reference.pfm").display().to_string());
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Runtime(format!("missing files: {}", missing.join(", "))));
    }
    create_dir(&a.out)?;
    for &f in &frames {
        let bundle = &dataset.frames[f];
        let model = pfm::read(&cfg.predictions.join(format!("frame_{f:04}.pfm")))?;
        let baseline = pfm::read(&cfg.predictions.join(format!("baseline_{f:04}.pfm")))?;
        let reference = tonemap(bundle.reference.as_ref().expect("checked above"));
        let panels = [tonemap(&bundle.color), tonemap(&baseline), tonemap(&model), reference.clone()];
        if panels.iter().any(|p| p.shape() != reference.shape()) {
            return Err(CliError::Runtime(format!("frame {f}: prediction resolution does not match the dataset")));
        }
        let m = metrics::all(&panels[2], &reference)?;
        let images = panels.iter().map(to_rgb).collect::<Result<Vec<_>, _>>()?;
        let path = a.out.join(format!("frame_{f:04}_psnr_{:.2}_ssim_{:.4}.png", m.psnr, m.ssim));
        hstack(&images).save(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        eprintln!("{}", path.display());
    }
    write_run_json(&a.out, "figures", &value)?;
    Ok(())
}
