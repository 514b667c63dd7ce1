//! Training on short sequences with random tile-aligned crops, and held-out evaluation.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TensorError};
use crate::framedata::{Dataset, Split};
use crate::losses::{self, FrameOutputs, FrameTargets, LossTerms, LossWeights};
use crate::metrics::{self, tonemap, Metrics};
use crate::model::{self, prepare_frame, Ablation, Baseline, FrameTensors, Stepper};
use crate::params::{Bound, ModelParams};
use crate::reprojection::warp_taps;
use crate::tensor::{adam_step, AdamConfig, AdamState, Graph, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub sequence_length: usize,
    pub crop: usize,
    pub batch_size: usize,
    /// Optimizer steps.
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub ablation: Ablation,
    pub loss: LossWeights,
    /// Write `checkpoint.ssrw` every this many steps (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            sequence_length: 5,
            crop: 64,
            batch_size: 4,
            steps: 2000,
            learning_rate: 1e-4,
            seed: 0,
            ablation: Ablation::default(),
            loss: LossWeights::default(),
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop % 8 != 0 {
            return Err(Error::Config(format!("crop {} must be a positive multiple of 8", self.crop)));
        }
        if self.sequence_length < 2 {
            return Err(Error::Config("sequence_length must be at least 2".into()));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config("batch_size and steps must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        self.loss.validate(self.sequence_length)
    }
}

/// Piecewise constant: `base` until T/3, halved until 2T/3, quartered after.
pub fn lr_schedule(step: usize, total_steps: usize, base_lr: f64) -> f64 {
    if 3 * step < total_steps {
        base_lr
    } else if 3 * step < 2 * total_steps {
        base_lr / 2.0
    } else {
        base_lr / 4.0
    }
}

/// One training sequence: frames `start..start + len` cropped at `(y0, x0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainItem {
    pub start: usize,
    pub y0: usize,
    pub x0: usize,
}

/// Every valid sequence start in the training split, shuffled, each with an even crop offset.
pub fn make_batches(dataset: &Dataset, config: &TrainConfig, epoch_seed: u64) -> Result<Vec<Vec<TrainItem>>> {
    let m = &dataset.manifest;
    if config.crop > m.width || config.crop > m.height {
        return Err(Error::Config(format!("crop {} exceeds the {}x{} frames", config.crop, m.width, m.height)));
    }
    let len = config.sequence_length;
    let mut starts: Vec<usize> =
        dataset.runs(Split::Train).into_iter().filter(|r| r.len() >= len).flat_map(|r| r.start..=r.end - len).collect();
    if starts.is_empty() {
        return Err(Error::Dataset(format!("no run of {len} consecutive training frames")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    starts.shuffle(&mut rng);
    let items: Vec<TrainItem> = starts
        .into_iter()
        .map(|start| TrainItem {
            start,
            y0: 2 * rng.gen_range(0..=(m.height - config.crop) / 2),
            x0: 2 * rng.gen_range(0..=(m.width - config.crop) / 2),
        })
        .collect();
    Ok(items.chunks(config.batch_size).map(|c| c.to_vec()).collect())
}

fn pool2(t: &Tensor) -> Result<Tensor> {
    let mut g = Graph::<f32>::new();
    let v = g.constant(t.clone())?;
    let p = g.avgpool2(v)?;
    Ok(g.value(p).clone())
}

/// Loss terms, total and parameter gradients for one sequence.
pub struct SequenceLoss {
    pub terms: LossTerms<f64>,
    pub total: f64,
    pub gradients: ModelParams,
}

pub fn sequence_loss(
    params: &ModelParams,
    frames: &[FrameTensors],
    weights: &LossWeights,
    want_gradients: bool,
) -> Result<SequenceLoss> {
    let ablation = Ablation::from_params(params)?;
    let mut g = Graph::<f32>::new();
    let p = Bound::new(&mut g, params)?;
    let mut state = None;
    let mut prev = None;
    let mut outputs = Vec::with_capacity(frames.len());
    let mut targets = Vec::with_capacity(frames.len());
    let mut last_taps = None;
    for f in frames {
        let target = f
            .target
            .as_ref()
            .ok_or_else(|| Error::Dataset(format!("frame {} has no reference image", f.frame_index)))?;
        let taps = warp_taps(&f.motion)?;
        let fwd = model::frame_forward(&mut g, &p, ablation, f, taps.clone(), state.as_ref(), prev)?;
        let half = pool2(target)?;
        let quarter = pool2(&half)?;
        targets.push(FrameTargets {
            full: g.constant(target.clone())?,
            half: g.constant(half)?,
            quarter: g.constant(quarter)?,
        });
        outputs.push(FrameOutputs { full: fwd.outputs.full, half: fwd.outputs.half, quarter: fwd.outputs.quarter });
        state = Some(fwd.state);
        prev = Some(fwd.outputs.full);
        last_taps = Some(taps);
    }
    let last = frames.last().ok_or_else(|| Error::Invalid("empty sequence".into()))?;
    let state = state.expect("at least one frame");
    let acc_albedo = state.albedo(&mut g)?;
    let ref_albedo = g.constant(last.albedo.clone())?;
    let terms = losses::sequence_terms(
        &mut g,
        &outputs,
        &targets,
        last_taps.expect("at least one frame"),
        acc_albedo,
        ref_albedo,
        weights,
    )?;
    let total = losses::combine(&mut g, &terms, weights)?;
    let values = terms.values(&g);
    let total_value = g.value(total).item() as f64;
    let gradients = if want_gradients {
        let grads = g.backward(total)?;
        p.gradients(&grads, params)
    } else {
        params.zeros_like()
    };
    Ok(SequenceLoss { terms: values, total: total_value, gradients })
}

/// Network-space tensors for one training item.
pub fn item_frames(dataset: &Dataset, config: &TrainConfig, item: TrainItem) -> Result<Vec<FrameTensors>> {
    let crop = Some((item.y0, item.x0, config.crop, config.crop));
    (item.start..item.start + config.sequence_length)
        .map(|i| prepare_frame(&dataset.frames[i], config.ablation, crop))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub terms: LossTerms<f64>,
    pub total: f64,
}

impl LogRow {
    pub const CSV_HEADER: &'static str = "step,lr,spatial,temporal,edge,warped_temporal,albedo,total";

    pub fn csv(&self) -> String {
        let t = &self.terms;
        format!(
            "{},{:e},{},{},{},{},{},{}",
            self.step, self.lr, t.spatial, t.temporal, t.edge, t.warped_temporal, t.albedo, self.total
        )
    }
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<LogRow>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.ssrw";
pub const INITIAL_CHECKPOINT_FILE: &str = "step_0.ssrw";
pub const LOG_FILE: &str = "train_log.csv";

/// Train from scratch. When `out` is given, writes the initial and periodic checkpoints and the CSV log there.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    out: Option<&Path>,
    mut on_step: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut params = model::init_model(config.ablation, config.seed);
    let mut adam = AdamState::new(&params);
    let mut log_file = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            params.save(&dir.join(INITIAL_CHECKPOINT_FILE))?;
            let path = dir.join(LOG_FILE);
            let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{}", LogRow::CSV_HEADER).map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };
    let save = |params: &ModelParams| -> Result<()> {
        match out {
            Some(dir) => params.save(&dir.join(CHECKPOINT_FILE)),
            None => Ok(()),
        }
    };
    let mut log = Vec::with_capacity(config.steps);
    let mut epoch = 0u64;
    let mut batches = make_batches(dataset, config, config.seed.wrapping_add(epoch))?.into_iter();
    for step in 0..config.steps {
        let batch = match batches.next() {
            Some(b) => b,
            None => {
                epoch += 1;
                batches = make_batches(dataset, config, config.seed.wrapping_add(epoch))?.into_iter();
                batches.next().expect("nonempty epoch")
            }
        };
        let mut grads = params.zeros_like();
        let mut terms = LossTerms::<f64>::default();
        let mut total = 0.0;
        // items run in parallel; results are summed in batch order so any thread count gives the same bytes
        let results: Vec<Result<SequenceLoss>> = batch
            .par_iter()
            .map(|item| sequence_loss(&params, &item_frames(dataset, config, *item)?, &config.loss, true))
            .collect();
        for res in results {
            let res = match res {
                Ok(r) => r,
                Err(Error::Tensor(e @ (TensorError::NonFinite { .. } | TensorError::NonFiniteGradient { .. }))) => {
                    save(&params)?;
                    return Err(Error::Diverged { step, detail: e.to_string() });
                }
                Err(e) => return Err(e),
            };
            grads.accumulate(&res.gradients);
            terms.spatial += res.terms.spatial;
            terms.temporal += res.terms.temporal;
            terms.edge += res.terms.edge;
            terms.warped_temporal += res.terms.warped_temporal;
            terms.albedo += res.terms.albedo;
            total += res.total;
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n as f32);
        let terms = LossTerms {
            spatial: terms.spatial / n,
            temporal: terms.temporal / n,
            edge: terms.edge / n,
            warped_temporal: terms.warped_temporal / n,
            albedo: terms.albedo / n,
        };
        let total = total / n;
        if !total.is_finite() {
            save(&params)?;
            return Err(Error::Diverged { step, detail: format!("loss is {total}") });
        }
        let lr = lr_schedule(step, config.steps, config.learning_rate);
        let before = params.clone();
        if let Err(e) = adam_step(&mut params, &grads, &mut adam, lr, AdamConfig::default()) {
            save(&before)?;
            return Err(Error::Diverged { step, detail: e.to_string() });
        }
        let row = LogRow { step, lr, terms, total };
        if let Some((f, path)) = log_file.as_mut() {
            writeln!(f, "{}", row.csv()).map_err(|e| Error::io(path.as_path(), e))?;
        }
        on_step(&row);
        log.push(row);
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
            save(&params)?;
        }
    }
    save(&params)?;
    Ok(TrainOutcome { params, log })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    pub model: Metrics,
    pub baseline: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub ablation: String,
    pub frames: Vec<FrameReport>,
    pub mean_model: Metrics,
    pub mean_baseline: Metrics,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "frame,psnr,ssim,rmse,baseline_psnr,baseline_ssim,baseline_rmse";

    pub fn csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.frames {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.frame, r.model.psnr, r.model.ssim, r.model.rmse, r.baseline.psnr, r.baseline.ssim, r.baseline.rmse
            ));
        }
        s
    }
}

fn mean_metrics(rows: impl Iterator<Item = Metrics>) -> Metrics {
    let mut m = Metrics::default();
    let mut n = 0.0;
    for r in rows {
        m.psnr += r.psnr;
        m.ssim += r.ssim;
        m.rmse += r.rmse;
        n += 1.0;
    }
    if n > 0.0 {
        m.psnr /= n;
        m.ssim /= n;
        m.rmse /= n;
    }
    m
}

/// Linear images for one frame of sequential inference.
pub struct FrameImages {
    pub frame: usize,
    /// The sparse path-traced input.
    pub input: Tensor,
    pub baseline: Tensor,
    pub model: Tensor,
    pub reference: Option<Tensor>,
    /// History weight of the accumulator, when the model has one.
    pub alpha: Option<Tensor>,
}

/// Run model and baseline over each run of `split`, resetting both at every run start.
pub fn infer(
    params: &ModelParams,
    dataset: &Dataset,
    split: Split,
    mut on_frame: impl FnMut(FrameImages) -> Result<()>,
) -> Result<()> {
    let ablation = Ablation::from_params(params)?;
    let runs = dataset.runs(split);
    if runs.is_empty() {
        return Err(Error::Dataset(format!("split {split:?} has no frames")));
    }
    let (w, h) = (dataset.manifest.width, dataset.manifest.height);
    if w % 8 != 0 || h % 8 != 0 {
        return Err(Error::Dataset(format!("resolution {w}x{h} is not divisible by 8")));
    }
    let mut stepper = Stepper::new(params)?;
    for run in runs {
        stepper.reset();
        let mut baseline = Baseline::new();
        for i in run {
            let bundle = &dataset.frames[i];
            let out = stepper.step(&prepare_frame(bundle, ablation, None)?)?;
            on_frame(FrameImages {
                frame: i,
                input: bundle.color.clone(),
                baseline: baseline.step(bundle)?,
                model: out.radiance,
                reference: bundle.reference.clone(),
                alpha: out.alpha,
            })?;
        }
    }
    Ok(())
}

/// Per-frame metrics of model and baseline against the reference, after [`tonemap`].
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    split: Split,
    mut on_frame: impl FnMut(&FrameImages) -> Result<()>,
) -> Result<MetricsReport> {
    let ablation = Ablation::from_params(params)?;
    let mut rows = Vec::new();
    infer(params, dataset, split, |images| {
        let reference = images
            .reference
            .as_ref()
            .ok_or_else(|| Error::Dataset(format!("frame {} has no reference image", images.frame)))?;
        let reference = tonemap(reference);
        rows.push(FrameReport {
            frame: images.frame,
            model: metrics::all(&tonemap(&images.model), &reference)?,
            baseline: metrics::all(&tonemap(&images.baseline), &reference)?,
        });
        on_frame(&images)
    })?;
    Ok(MetricsReport {
        split,
        ablation: ablation.label(),
        mean_model: mean_metrics(rows.iter().map(|r| r.model)),
        mean_baseline: mean_metrics(rows.iter().map(|r| r.baseline)),
        frames: rows,
    })
}
