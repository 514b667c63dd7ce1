//! Training loss: spatial SMAPE, temporal, edge (HFEN), warped-temporal and albedo terms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TensorError};
use crate::tensor::{Graph, Real, Var, WarpTaps};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub spatial: f64,
    pub temporal: f64,
    pub edge: f64,
    pub warped_temporal: f64,
    pub albedo: f64,
    /// Per-frame weights, later frames weighted higher.
    pub sequence: Vec<f64>,
    pub smape_eps: f64,
    /// Side of the Laplacian-of-Gaussian kernel (15, or 9 for small crops).
    pub edge_kernel: usize,
    pub edge_sigma: f64,
    /// Weights of the half- and quarter-resolution heads inside the spatial term.
    pub coarse: [f64; 2],
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            spatial: 0.7,
            temporal: 0.1,
            edge: 0.2,
            warped_temporal: 0.4,
            albedo: 5.0,
            sequence: vec![0.05, 0.25, 0.5, 0.75, 1.0],
            smape_eps: 1e-2,
            edge_kernel: 15,
            edge_sigma: 1.5,
            coarse: [0.5, 0.25],
        }
    }
}

impl LossWeights {
    pub fn validate(&self, sequence_length: usize) -> Result<()> {
        let all = [self.spatial, self.temporal, self.edge, self.warped_temporal, self.albedo, self.smape_eps];
        if all.iter().chain(&self.sequence).chain(&self.coarse).any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if self.smape_eps <= 0.0 {
            return Err(Error::Config("smape_eps must be positive".into()));
        }
        if self.sequence.len() != sequence_length {
            return Err(Error::Config(format!(
                "{} sequence weights for sequences of length {}",
                self.sequence.len(),
                sequence_length
            )));
        }
        if self.edge_kernel % 2 == 0 || self.edge_kernel < 3 {
            return Err(Error::Config(format!("edge kernel side {} must be odd and at least 3", self.edge_kernel)));
        }
        Ok(())
    }
}

/// The five loss terms, before weighting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms<V = f64> {
    pub spatial: V,
    pub temporal: V,
    pub edge: V,
    pub warped_temporal: V,
    pub albedo: V,
}

impl LossTerms<f64> {
    pub fn combined(&self, w: &LossWeights) -> f64 {
        w.spatial * self.spatial
            + w.temporal * self.temporal
            + w.edge * self.edge
            + w.warped_temporal * self.warped_temporal
            + w.albedo * self.albedo
    }
}

impl LossTerms<Var> {
    pub fn values<T: Real>(&self, g: &Graph<T>) -> LossTerms<f64> {
        let v = |x: Var| g.value(x).item().as_f64();
        LossTerms {
            spatial: v(self.spatial),
            temporal: v(self.temporal),
            edge: v(self.edge),
            warped_temporal: v(self.warped_temporal),
            albedo: v(self.albedo),
        }
    }
}

/// Laplacian of Gaussian, zero-sum, in the form of MATLAB's `fspecial('log')`.
pub fn log_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let n = size * size;
    let mut gauss = Vec::with_capacity(n);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 - r, y as f64 - r);
            gauss.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = gauss.iter().sum();
    let s4 = sigma.powi(4);
    let mut k: Vec<f64> = (0..n)
        .map(|i| {
            let (dx, dy) = ((i % size) as f64 - r, (i / size) as f64 - r);
            gauss[i] / total * (dx * dx + dy * dy - 2.0 * sigma * sigma) / s4
        })
        .collect();
    let mean = k.iter().sum::<f64>() / n as f64;
    for v in &mut k {
        *v -= mean;
    }
    k
}

pub fn smape<T: Real>(g: &mut Graph<T>, d: Var, r: Var, eps: f64) -> Result<Var, TensorError> {
    g.smape(d, r, T::from_f64(eps))
}

/// SMAPE of consecutive-frame differences, weighted by `weights[t]` for the pair ending at `t`.
pub fn temporal_loss<T: Real>(g: &mut Graph<T>, d: &[Var], r: &[Var], weights: &[f64], eps: f64) -> Result<Var> {
    if d.len() < 2 || d.len() != r.len() || weights.len() < d.len() {
        return Err(Error::Invalid(format!(
            "temporal loss needs two or more frames and matching weights (got {} outputs, {} targets, {} weights)",
            d.len(),
            r.len(),
            weights.len()
        )));
    }
    let mut terms = Vec::with_capacity(d.len() - 1);
    for t in 1..d.len() {
        let dd = g.sub(d[t], d[t - 1])?;
        let dr = g.sub(r[t], r[t - 1])?;
        let l = smape(g, dd, dr, eps)?;
        terms.push(g.scale(l, T::from_f64(weights[t]))?);
    }
    Ok(sum_all(g, &terms)?)
}

/// Mean absolute difference of LoG-filtered images, both divided by `|r| + eps`.
pub fn edge_loss<T: Real>(g: &mut Graph<T>, d: Var, r: Var, eps: f64, kernel: &[T], size: usize) -> Result<Var, TensorError> {
    let fd = g.filter(d, kernel, size)?;
    let fr = g.filter(r, kernel, size)?;
    let inv = g.value(r).map(|v| T::one() / (v.abs() + T::from_f64(eps)));
    let nd = g.mul_const(fd, &inv)?;
    let nr = g.mul_const(fr, &inv)?;
    g.l1_mean(nd, nr)
}

/// SMAPE between `d4 − W(d3)` and `r4 − W(r3)`.
pub fn warped_temporal_loss<T: Real>(
    g: &mut Graph<T>,
    d3: Var,
    d4: Var,
    r3: Var,
    r4: Var,
    taps: Arc<WarpTaps>,
    eps: f64,
) -> Result<Var, TensorError> {
    let wd = g.warp(d3, taps.clone())?;
    let wr = g.warp(r3, taps)?;
    let od = g.sub(d4, wd)?;
    let or = g.sub(r4, wr)?;
    smape(g, od, or, eps)
}

pub fn albedo_loss<T: Real>(g: &mut Graph<T>, acc_albedo: Var, ref_albedo: Var, eps: f64) -> Result<Var, TensorError> {
    smape(g, acc_albedo, ref_albedo, eps)
}

pub fn combine<T: Real>(g: &mut Graph<T>, terms: &LossTerms<Var>, w: &LossWeights) -> Result<Var, TensorError> {
    let parts = [
        g.scale(terms.spatial, T::from_f64(w.spatial))?,
        g.scale(terms.temporal, T::from_f64(w.temporal))?,
        g.scale(terms.edge, T::from_f64(w.edge))?,
        g.scale(terms.warped_temporal, T::from_f64(w.warped_temporal))?,
        g.scale(terms.albedo, T::from_f64(w.albedo))?,
    ];
    sum_all(g, &parts)
}

fn sum_all<T: Real>(g: &mut Graph<T>, xs: &[Var]) -> Result<Var, TensorError> {
    let mut acc = xs[0];
    for &x in &xs[1..] {
        acc = g.add(acc, x)?;
    }
    Ok(acc)
}

/// Network outputs for one frame of a training sequence.
#[derive(Clone, Copy, Debug)]
pub struct FrameOutputs {
    pub full: Var,
    pub half: Var,
    pub quarter: Var,
}

/// Targets for one frame, in network (log-demodulated) space.
#[derive(Clone, Copy, Debug)]
pub struct FrameTargets {
    pub full: Var,
    pub half: Var,
    pub quarter: Var,
}

/// All five terms for one sequence.
///
/// The warped-temporal term uses the last two frames and `last_taps` (motion of the last frame);
/// the albedo term compares the final accumulated albedo with `ref_albedo`.
pub fn sequence_terms<T: Real>(
    g: &mut Graph<T>,
    outputs: &[FrameOutputs],
    targets: &[FrameTargets],
    last_taps: Arc<WarpTaps>,
    acc_albedo: Var,
    ref_albedo: Var,
    w: &LossWeights,
) -> Result<LossTerms<Var>> {
    let n = outputs.len();
    if n < 2 || targets.len() != n || w.sequence.len() != n {
        return Err(Error::Invalid(format!(
            "sequence loss needs matching outputs ({n}), targets ({}) and weights ({})",
            targets.len(),
            w.sequence.len()
        )));
    }
    let kernel: Vec<T> = log_kernel(w.edge_kernel, w.edge_sigma).into_iter().map(T::from_f64).collect();
    let eps = w.smape_eps;
    let mut spatial = Vec::with_capacity(n);
    let mut edge = Vec::with_capacity(n);
    for t in 0..n {
        let (o, r) = (outputs[t], targets[t]);
        let s_full = smape(g, o.full, r.full, eps)?;
        let s_half = smape(g, o.half, r.half, eps)?;
        let s_half = g.scale(s_half, T::from_f64(w.coarse[0]))?;
        let s_quarter = smape(g, o.quarter, r.quarter, eps)?;
        let s_quarter = g.scale(s_quarter, T::from_f64(w.coarse[1]))?;
        let s = sum_all(g, &[s_full, s_half, s_quarter])?;
        spatial.push(g.scale(s, T::from_f64(w.sequence[t]))?);
        let e = edge_loss(g, o.full, r.full, eps, &kernel, w.edge_kernel)?;
        edge.push(g.scale(e, T::from_f64(w.sequence[t]))?);
    }
    let d: Vec<Var> = outputs.iter().map(|o| o.full).collect();
    let r: Vec<Var> = targets.iter().map(|t| t.full).collect();
    Ok(LossTerms {
        spatial: sum_all(g, &spatial)?,
        temporal: temporal_loss(g, &d, &r, &w.sequence, eps)?,
        edge: sum_all(g, &edge)?,
        warped_temporal: warped_temporal_loss(g, d[n - 2], d[n - 1], r[n - 2], r[n - 1], last_taps, eps)?,
        albedo: albedo_loss(g, acc_albedo, ref_albedo, eps)?,
    })
}
