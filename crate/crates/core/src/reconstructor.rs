//! Multi-scale U-Net producing log-demodulated irradiance at full, half and quarter resolution.

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::framedata::{log_decode, remodulate};
use crate::params::{Bound, ModelParams};
use crate::tensor::{Graph, Real, Tensor, Var};

/// cur features 15 + mask 1 + accumulated features 12 + accumulated irradiance 3
/// + sparse irradiance 3 + warped previous output 3.
pub const INPUTS: usize = 37;
pub const WIDTHS: [usize; 3] = [32, 48, 64];
pub const BOTTLENECK: usize = 64;
const RGB: usize = 3;

/// `(name, in, out)` for every conv layer.
pub fn layers() -> Vec<(&'static str, usize, usize)> {
    let [w1, w2, w3] = WIDTHS;
    vec![
        ("rec.enc1.0", INPUTS, w1),
        ("rec.enc1.1", w1, w1),
        ("rec.enc2.0", w1 + RGB, w2),
        ("rec.enc2.1", w2, w2),
        ("rec.enc3.0", w2 + RGB, w3),
        ("rec.enc3.1", w3, w3),
        ("rec.mid.0", w3 + RGB, BOTTLENECK),
        ("rec.mid.1", BOTTLENECK, BOTTLENECK),
        ("rec.dec3.0", BOTTLENECK + w3 + RGB, w3),
        ("rec.dec3.1", w3, w3),
        ("rec.head.quarter", w3, RGB),
        ("rec.dec2.0", w3 + w2 + RGB + RGB, w2),
        ("rec.dec2.1", w2, w2),
        ("rec.head.half", w2, RGB),
        ("rec.dec1.0", w2 + w1 + RGB + RGB, w1),
        ("rec.dec1.1", w1, w1),
        ("rec.head.full", w1, RGB),
    ]
}

pub fn init_params(params: &mut ModelParams, rng: &mut impl Rng) {
    for (name, i, o) in layers() {
        params.init_conv(name, i, o, rng);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ReconInputs {
    pub features: Var,
    pub mask: Var,
    pub acc_features: Var,
    pub acc_irradiance: Var,
    pub sparse_irradiance: Var,
    pub warped_prev: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct ReconOutputs {
    pub full: Var,
    pub half: Var,
    pub quarter: Var,
}

fn conv_relu<T: Real>(g: &mut Graph<T>, p: &Bound, name: &str, x: Var) -> Result<Var, TensorError> {
    let y = p.conv(g, name, x)?;
    g.relu(y)
}

fn stage<T: Real>(g: &mut Graph<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var, TensorError> {
    let h = conv_relu(g, p, &format!("{prefix}.0"), x)?;
    conv_relu(g, p, &format!("{prefix}.1"), h)
}

pub fn reconstruct<T: Real>(g: &mut Graph<T>, p: &Bound, inp: &ReconInputs) -> Result<ReconOutputs, TensorError> {
    let (_, h, w) = g.value(inp.features).chw()?;
    if h % 8 != 0 || w % 8 != 0 {
        return Err(TensorError::Shape { op: "reconstruct", detail: format!("{h}x{w} is not divisible by 8") });
    }
    let x = g.concat(&[
        inp.features,
        inp.mask,
        inp.acc_features,
        inp.acc_irradiance,
        inp.sparse_irradiance,
        inp.warped_prev,
    ])?;
    let wp1 = inp.warped_prev;
    let wp2 = g.avgpool2(wp1)?;
    let wp4 = g.avgpool2(wp2)?;
    let wp8 = g.avgpool2(wp4)?;

    let e1 = stage(g, p, "rec.enc1", x)?;
    let d = g.maxpool2(e1)?;
    let d = g.concat(&[d, wp2])?;
    let e2 = stage(g, p, "rec.enc2", d)?;
    let d = g.maxpool2(e2)?;
    let d = g.concat(&[d, wp4])?;
    let e3 = stage(g, p, "rec.enc3", d)?;
    let d = g.maxpool2(e3)?;
    let d = g.concat(&[d, wp8])?;
    let mid = stage(g, p, "rec.mid", d)?;

    let u = g.upsample2(mid)?;
    let u = g.concat(&[u, e3, wp4])?;
    let d3 = stage(g, p, "rec.dec3", u)?;
    let quarter = conv_relu(g, p, "rec.head.quarter", d3)?;

    let u = g.upsample2(d3)?;
    let q_up = g.upsample2(quarter)?;
    let u = g.concat(&[u, e2, wp2, q_up])?;
    let d2 = stage(g, p, "rec.dec2", u)?;
    let half = conv_relu(g, p, "rec.head.half", d2)?;

    let u = g.upsample2(d2)?;
    let h_up = g.upsample2(half)?;
    let u = g.concat(&[u, e1, wp1, h_up])?;
    let d1 = stage(g, p, "rec.dec1", u)?;
    let full = conv_relu(g, p, "rec.head.full", d1)?;
    Ok(ReconOutputs { full, half, quarter })
}

/// Network output to display-referred linear RGB: undo the log, re-apply albedo.
pub fn finalize(full: &Tensor, acc_albedo: &Tensor) -> Result<Tensor> {
    remodulate(&log_decode(full)?, acc_albedo)
}
