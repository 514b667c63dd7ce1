//! Temporal feature accumulator: learned per-pixel blend of warped history and the current frame.
//!
//! `e^a_t = α·W(e^a_{t-1}) + β·e_t` with `(β, α)` a per-pixel softmax over the similarity of each
//! input's embedding to a reference embedding of the current frame.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result, TensorError};
use crate::params::{Bound, ModelParams};
use crate::tensor::{Graph, Real, Tensor, Var, WarpTaps};

/// Network-space feature channels per frame (the GBuffer layout).
pub const FEATURES: usize = 15;
/// Features carried in the accumulator state: every GBuffer channel except transparent.
pub const ACCUMULATED: usize = 12;
/// Reference net input: all features plus the mask.
pub const REF_INPUTS: usize = FEATURES + 1;
pub const HIDDEN: usize = 32;
pub const EMBED: usize = 32;

/// Ranges of the network feature tensor that are accumulated, in order.
const ACCUMULATED_RANGES: [(usize, usize); 2] = [(0, 9), (12, 3)];

pub const PARAM_NAMES: [&str; 4] = ["acc.ref.0", "acc.ref.1", "acc.emb.0", "acc.emb.1"];

pub fn init_params(params: &mut ModelParams, rng: &mut impl Rng) {
    params.init_conv("acc.ref.0", REF_INPUTS, HIDDEN, rng);
    params.init_conv("acc.ref.1", HIDDEN, EMBED, rng);
    params.init_conv("acc.emb.0", ACCUMULATED, HIDDEN, rng);
    params.init_conv("acc.emb.1", HIDDEN, EMBED, rng);
}

/// The 12 accumulated channels of a 15-channel network feature image.
pub fn accumulated_channels<T: Real>(g: &mut Graph<T>, features: Var) -> Result<Var, TensorError> {
    let parts = ACCUMULATED_RANGES.iter().map(|&(s, n)| g.slice_channels(features, s, n)).collect::<Result<Vec<_>, _>>()?;
    g.concat(&parts)
}

pub fn embed_reference<T: Real>(g: &mut Graph<T>, p: &Bound, features: Var, mask: Var) -> Result<Var, TensorError> {
    let x = g.concat(&[features, mask])?;
    let h = p.conv(g, "acc.ref.0", x)?;
    let h = g.relu(h)?;
    p.conv(g, "acc.ref.1", h)
}

/// Shared embedding net, applied to current and to warped previous features.
pub fn embed<T: Real>(g: &mut Graph<T>, p: &Bound, features: Var) -> Result<Var, TensorError> {
    let h = p.conv(g, "acc.emb.0", features)?;
    let h = g.relu(h)?;
    p.conv(g, "acc.emb.1", h)
}

/// Per-pixel blend factors; `alpha` weights history, `beta` the current frame.
#[derive(Clone, Copy, Debug)]
pub struct Blend {
    pub alpha: Var,
    pub beta: Var,
}

pub fn compute_blend<T: Real>(g: &mut Graph<T>, reference: Var, cur: Var, prev: Var) -> Result<Blend, TensorError> {
    let s_cur = g.mul(reference, cur)?;
    let s_cur = g.channel_sum(s_cur)?;
    let s_prev = g.mul(reference, prev)?;
    let s_prev = g.channel_sum(s_prev)?;
    let logits = g.concat(&[s_cur, s_prev])?;
    let w = g.softmax_pair(logits)?;
    Ok(Blend { beta: g.slice_channels(w, 0, 1)?, alpha: g.slice_channels(w, 1, 1)? })
}

/// `alpha·history + beta·current`, per pixel across all channels.
pub fn blend<T: Real>(g: &mut Graph<T>, b: Blend, history: Var, current: Var) -> Result<Var, TensorError> {
    let h = g.mul_channel(b.alpha, history)?;
    let c = g.mul_channel(b.beta, current)?;
    g.add(h, c)
}

/// One frame of accumulator input, already in network space.
#[derive(Clone)]
pub struct StepInputs {
    pub frame_index: usize,
    /// 15-channel network features.
    pub features: Var,
    pub mask: Var,
    /// Sparse irradiance, log-demodulated, zero where unsampled.
    pub irradiance: Var,
    /// Taps for warping last frame's state into this frame.
    pub taps: Arc<WarpTaps>,
    /// `[1, H, W]` warp validity.
    pub validity: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct AccumulatorState {
    /// Accumulated irradiance, 3 channels, log-demodulated.
    pub irradiance: Var,
    /// Accumulated features, [`ACCUMULATED`] channels.
    pub features: Var,
    pub frame_index: usize,
}

impl AccumulatorState {
    /// Accumulated albedo (first three feature channels).
    pub fn albedo<T: Real>(&self, g: &mut Graph<T>) -> Result<Var, TensorError> {
        g.slice_channels(self.features, 0, 3)
    }
}

#[derive(Clone, Copy, Debug)]
pub enum AlphaOverride {
    Learned,
    /// Use this constant history weight everywhere (diagnostics).
    Fixed(f64),
}

/// Advance the accumulator by one frame. With no prior state the history is the current frame itself.
pub fn accumulate_step<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    state: Option<&AccumulatorState>,
    inp: &StepInputs,
) -> Result<(AccumulatorState, Blend)> {
    accumulate_step_with(g, p, state, inp, AlphaOverride::Learned)
}

pub fn accumulate_step_with<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    state: Option<&AccumulatorState>,
    inp: &StepInputs,
    alpha: AlphaOverride,
) -> Result<(AccumulatorState, Blend)> {
    let cur_feats = accumulated_channels(g, inp.features)?;
    let (hist_irr, hist_feats) = match state {
        None => (inp.irradiance, cur_feats),
        Some(s) => {
            if inp.frame_index != s.frame_index + 1 {
                return Err(Error::Invalid(format!(
                    "accumulator expected frame {}, got frame {}",
                    s.frame_index + 1,
                    inp.frame_index
                )));
            }
            (g.warp(s.irradiance, inp.taps.clone())?, g.warp(s.features, inp.taps.clone())?)
        }
    };
    let b = match alpha {
        AlphaOverride::Learned => {
            let reference = embed_reference(g, p, inp.features, inp.mask)?;
            let e_cur = embed(g, p, cur_feats)?;
            let prev_in = if state.is_some() { g.mul_channel(inp.validity, hist_feats)? } else { hist_feats };
            let e_prev = embed(g, p, prev_in)?;
            compute_blend(g, reference, e_cur, e_prev)?
        }
        AlphaOverride::Fixed(a) => {
            let shape = g.shape(inp.mask).to_vec();
            Blend {
                alpha: g.constant(Tensor::full(shape.clone(), T::from_f64(a)))?,
                beta: g.constant(Tensor::full(shape, T::from_f64(1.0 - a)))?,
            }
        }
    };
    let next = match state {
        // first frame: history is the current frame, so the blend is an exact copy
        None => AccumulatorState { irradiance: inp.irradiance, features: cur_feats, frame_index: inp.frame_index },
        Some(_) => AccumulatorState {
            irradiance: blend(g, b, hist_irr, inp.irradiance)?,
            features: blend(g, b, hist_feats, cur_feats)?,
            frame_index: inp.frame_index,
        },
    };
    Ok((next, b))
}
