//! The full per-frame pipeline: network inputs, accumulator, reconstructor, and the
//! non-learned baseline used for comparison.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::accumulator::{self, AccumulatorState, StepInputs};
use crate::error::{Error, Result};
use crate::framedata::{demodulate, log_encode, remodulate};
use crate::params::{Bound, ModelParams};
use crate::pathtracer::{feature, FrameBundle};
use crate::reconstructor::{self, ReconInputs, ReconOutputs};
use crate::reprojection::warp_taps;
use crate::tensor::{Graph, Real, Tensor, Var, WarpTaps};

pub const ABLATION_PARAM: &str = "meta.ablation";

/// Switches that remove parts of the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// No accumulator: current-frame values stand in for accumulated ones.
    pub no_tfa: bool,
    /// The warped previous output is replaced by zeros.
    pub no_warped_prev: bool,
    pub no_shadow: bool,
    pub no_transparent: bool,
}

impl Ablation {
    fn flags(&self) -> [bool; 4] {
        [self.no_tfa, self.no_warped_prev, self.no_shadow, self.no_transparent]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![4], self.flags().iter().map(|&f| if f { 1.0 } else { 0.0 }).collect()).expect("4 flags")
    }

    pub fn from_params(params: &ModelParams) -> Result<Self> {
        let t = params
            .get(ABLATION_PARAM)
            .ok_or_else(|| Error::Invalid(format!("checkpoint has no {ABLATION_PARAM} entry")))?;
        if t.shape() != [4] {
            return Err(Error::Invalid(format!("{ABLATION_PARAM} has shape {:?}, expected [4]", t.shape())));
        }
        let f = |i: usize| t.data()[i] != 0.0;
        Ok(Self { no_tfa: f(0), no_warped_prev: f(1), no_shadow: f(2), no_transparent: f(3) })
    }

    pub fn label(&self) -> String {
        let names = ["no_tfa", "no_warped_prev", "no_shadow", "no_transparent"];
        let on: Vec<&str> = names.iter().zip(self.flags()).filter(|(_, f)| *f).map(|(n, _)| *n).collect();
        if on.is_empty() {
            "full".into()
        } else {
            on.join("+")
        }
    }
}

/// Fresh parameters for the given ablation, deterministic in `seed`.
pub fn init_model(ablation: Ablation, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    if !ablation.no_tfa {
        accumulator::init_params(&mut params, &mut rng);
    }
    reconstructor::init_params(&mut params, &mut rng);
    params.insert(ABLATION_PARAM, ablation.to_tensor());
    params
}

/// One frame's network-space tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTensors {
    pub frame_index: usize,
    /// 15 channels: GBuffer with depth scaled into [0, 1] (misses at 1) and ablated planes zeroed.
    pub features: Tensor,
    pub mask: Tensor,
    /// `ln(1 + color / (albedo + ε))`, zero where unsampled.
    pub irradiance: Tensor,
    pub motion: Tensor,
    pub albedo: Tensor,
    /// Reference in network space, when the bundle has one.
    pub target: Option<Tensor>,
}

pub type Crop = (usize, usize, usize, usize);

fn maybe_crop(t: &Tensor, crop: Option<Crop>) -> Result<Tensor> {
    Ok(match crop {
        Some((y0, x0, h, w)) => t.crop(y0, x0, h, w)?,
        None => t.clone(),
    })
}

pub fn network_features(bundle: &FrameBundle, ablation: Ablation) -> Tensor {
    let mut f = bundle.features.clone();
    let plane = bundle.width * bundle.height;
    let scale = bundle.depth_scale.max(f32::MIN_POSITIVE);
    let data = f.data_mut();
    for v in &mut data[feature::DEPTH * plane..(feature::DEPTH + 1) * plane] {
        *v = if v.is_finite() { (*v / scale).clamp(0.0, 1.0) } else { 1.0 };
    }
    let mut zero = |start: usize| data[start * plane..(start + 3) * plane].iter_mut().for_each(|v| *v = 0.0);
    if ablation.no_shadow {
        zero(feature::SHADOW);
    }
    if ablation.no_transparent {
        zero(feature::TRANSPARENT);
    }
    f
}

/// Network-space target: `ln(1 + reference / (albedo + ε))`.
pub fn encode_radiance(color: &Tensor, albedo: &Tensor) -> Result<Tensor> {
    log_encode(&demodulate(&color.map(|v| v.max(0.0)), albedo)?)
}

pub fn prepare_frame(bundle: &FrameBundle, ablation: Ablation, crop: Option<Crop>) -> Result<FrameTensors> {
    let albedo = bundle.albedo();
    let irradiance = encode_radiance(&bundle.color, &albedo)?;
    let target = match &bundle.reference {
        Some(r) => Some(maybe_crop(&encode_radiance(r, &albedo)?, crop)?),
        None => None,
    };
    Ok(FrameTensors {
        frame_index: bundle.frame_index,
        features: maybe_crop(&network_features(bundle, ablation), crop)?,
        mask: maybe_crop(&bundle.mask, crop)?,
        irradiance: maybe_crop(&irradiance, crop)?,
        motion: maybe_crop(&bundle.motion, crop)?,
        albedo: maybe_crop(&albedo, crop)?,
        target,
    })
}

/// Graph handles for one processed frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameForward {
    pub outputs: ReconOutputs,
    pub state: AccumulatorState,
    /// History weight; `None` without the accumulator.
    pub alpha: Option<Var>,
}

/// Run accumulator and reconstructor on one frame inside `g`.
///
/// `state` and `prev_output` are last frame's accumulator state and full-resolution output;
/// both are `None` at the start of a sequence.
pub fn frame_forward<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    ablation: Ablation,
    frame: &FrameTensors,
    taps: Arc<WarpTaps>,
    state: Option<&AccumulatorState>,
    prev_output: Option<Var>,
) -> Result<FrameForward> {
    let features = g.constant(frame.features.cast())?;
    let mask = g.constant(frame.mask.cast())?;
    let irradiance = g.constant(frame.irradiance.cast())?;
    let (state, alpha) = if ablation.no_tfa {
        let feats = accumulator::accumulated_channels(g, features)?;
        (AccumulatorState { irradiance, features: feats, frame_index: frame.frame_index }, None)
    } else {
        let validity = g.constant(taps.validity().cast())?;
        let inp = StepInputs { frame_index: frame.frame_index, features, mask, irradiance, taps: taps.clone(), validity };
        let (s, b) = accumulator::accumulate_step(g, p, state, &inp)?;
        (s, Some(b.alpha))
    };
    let warped_prev = match prev_output {
        Some(prev) if !ablation.no_warped_prev => g.warp(prev, taps)?,
        _ => {
            let (_, h, w) = frame.features.chw()?;
            g.constant(Tensor::zeros(vec![3, h, w]))?
        }
    };
    let outputs = reconstructor::reconstruct(
        g,
        p,
        &ReconInputs {
            features,
            mask,
            acc_features: state.features,
            acc_irradiance: state.irradiance,
            sparse_irradiance: irradiance,
            warped_prev,
        },
    )?;
    Ok(FrameForward { outputs, state, alpha })
}

/// Result of running the model on one frame outside of training.
#[derive(Clone, Debug)]
pub struct StepResult {
    /// Network output, log-demodulated.
    pub full: Tensor,
    pub half: Tensor,
    pub quarter: Tensor,
    pub acc_albedo: Tensor,
    /// Linear RGB after undoing the log and re-applying the accumulated albedo.
    pub radiance: Tensor,
    pub alpha: Option<Tensor>,
}

/// Frame-by-frame inference carrying accumulator state and the previous output.
pub struct Stepper<'a> {
    params: &'a ModelParams,
    ablation: Ablation,
    state: Option<(Tensor, Tensor, usize)>,
    prev_output: Option<Tensor>,
}

impl<'a> Stepper<'a> {
    pub fn new(params: &'a ModelParams) -> Result<Self> {
        Ok(Self { params, ablation: Ablation::from_params(params)?, state: None, prev_output: None })
    }

    pub fn reset(&mut self) {
        self.state = None;
        self.prev_output = None;
    }

    pub fn step(&mut self, frame: &FrameTensors) -> Result<StepResult> {
        if let Some((_, _, last)) = &self.state {
            if frame.frame_index != last + 1 {
                self.reset();
            }
        }
        let mut g = Graph::<f32>::new();
        let p = Bound::new(&mut g, self.params)?;
        let state = match &self.state {
            Some((irr, feats, idx)) => Some(AccumulatorState {
                irradiance: g.constant(irr.clone())?,
                features: g.constant(feats.clone())?,
                frame_index: *idx,
            }),
            None => None,
        };
        let prev = match &self.prev_output {
            Some(t) => Some(g.constant(t.clone())?),
            None => None,
        };
        let taps = warp_taps(&frame.motion)?;
        let out = frame_forward(&mut g, &p, self.ablation, frame, taps, state.as_ref(), prev)?;
        let acc_albedo_var = out.state.albedo(&mut g)?;
        let full = g.value(out.outputs.full).clone();
        let acc_albedo = g.value(acc_albedo_var).clone();
        let radiance = reconstructor::finalize(&full, &acc_albedo)?;
        let result = StepResult {
            half: g.value(out.outputs.half).clone(),
            quarter: g.value(out.outputs.quarter).clone(),
            alpha: out.alpha.map(|a| g.value(a).clone()),
            acc_albedo,
            radiance,
            full: full.clone(),
        };
        self.state = Some((
            g.value(out.state.irradiance).clone(),
            g.value(out.state.features).clone(),
            frame.frame_index,
        ));
        self.prev_output = Some(full);
        Ok(result)
    }
}

/// Baseline history weight for the exponential blend.
pub const BASELINE_ALPHA: f32 = 0.8;

/// Fill unsampled pixels from sampled 3×3 neighbours, weighted bilinearly and by GBuffer similarity
/// (normal agreement and relative depth). Works on demodulated irradiance; returns it re-modulated.
pub fn guided_fill(bundle: &FrameBundle) -> Result<Tensor> {
    let albedo = bundle.albedo();
    let irr = demodulate(&bundle.color, &albedo)?;
    let (w, h) = (bundle.width, bundle.height);
    let plane = w * h;
    let f = bundle.features.data();
    let normal = |p: usize| [0, 1, 2].map(|c| f[(feature::NORMAL + c) * plane + p]);
    let depth = |p: usize| f[feature::DEPTH * plane + p];
    let mask = bundle.mask.data();
    let src = irr.data();
    let mut out = vec![0.0f32; 3 * plane];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if mask[p] != 0.0 {
                for c in 0..3 {
                    out[c * plane + p] = src[c * plane + p];
                }
                continue;
            }
            let (np, dp) = (normal(p), depth(p));
            let mut acc = [0.0f64; 3];
            let mut plain = [0.0f64; 3];
            let (mut wsum, mut psum) = (0.0f64, 0.0f64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (qx, qy) = (x as i64 + dx, y as i64 + dy);
                    if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                        continue;
                    }
                    let q = qy as usize * w + qx as usize;
                    if mask[q] == 0.0 {
                        continue;
                    }
                    let bil = (1.0 - dx.abs() as f64 * 0.5) * (1.0 - dy.abs() as f64 * 0.5);
                    let nq = normal(q);
                    let ndot = (np[0] * nq[0] + np[1] * nq[1] + np[2] * nq[2]) as f64;
                    let dq = depth(q);
                    let ddiff = if dp.is_finite() && dq.is_finite() {
                        ((dp - dq).abs() / dp.max(1e-3)) as f64
                    } else if dp.is_finite() != dq.is_finite() {
                        f64::INFINITY
                    } else {
                        0.0
                    };
                    let wgt = bil * (-(1.0 - ndot).max(0.0) * 8.0).exp() * (-ddiff * 20.0).exp();
                    for c in 0..3 {
                        let v = src[c * plane + q] as f64;
                        acc[c] += wgt * v;
                        plain[c] += bil * v;
                    }
                    wsum += wgt;
                    psum += bil;
                }
            }
            for c in 0..3 {
                out[c * plane + p] = if wsum > 1e-6 {
                    (acc[c] / wsum) as f32
                } else if psum > 0.0 {
                    (plain[c] / psum) as f32
                } else {
                    0.0
                };
            }
        }
    }
    remodulate(&Tensor::new(vec![3, h, w], out)?, &albedo)
}

/// Guided fill followed by an exponential blend with the warped previous baseline output.
pub struct Baseline {
    prev: Option<(Tensor, usize)>,
    alpha: f32,
}

impl Default for Baseline {
    fn default() -> Self {
        Self::new()
    }
}

impl Baseline {
    pub fn new() -> Self {
        Self::with_alpha(BASELINE_ALPHA)
    }

    /// `alpha` is the history weight, clamped to [0, 1].
    pub fn with_alpha(alpha: f32) -> Self {
        Self { prev: None, alpha: alpha.clamp(0.0, 1.0) }
    }

    pub fn step(&mut self, bundle: &FrameBundle) -> Result<Tensor> {
        let albedo = bundle.albedo();
        let fill = demodulate(&guided_fill(bundle)?, &albedo)?;
        let blended = match &self.prev {
            Some((prev, idx)) if *idx + 1 == bundle.frame_index => {
                let taps = warp_taps(&bundle.motion)?;
                let warped = taps.warp_image(prev)?;
                let plane = bundle.width * bundle.height;
                let data = fill
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &cur)| {
                        if taps.is_valid(i % plane) {
                            self.alpha * warped.data()[i] + (1.0 - self.alpha) * cur
                        } else {
                            cur
                        }
                    })
                    .collect();
                Tensor::new(fill.shape().to_vec(), data)?
            }
            _ => fill,
        };
        self.prev = Some((blended.clone(), bundle.frame_index));
        remodulate(&blended, &albedo)
    }
}

/// Linear RGB back from network space with a given albedo (used for targets and inputs).
pub fn decode_radiance(encoded: &Tensor, albedo: &Tensor) -> Result<Tensor> {
    reconstructor::finalize(encoded, albedo)
}
