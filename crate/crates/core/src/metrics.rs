//! Image quality metrics on display-range images.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Display transfer used before metrics and PNG export: clamp to [0, 1], then gamma 1/2.2.
pub fn tonemap(linear: &Tensor) -> Tensor {
    linear.map(|v| v.clamp(0.0, 1.0).powf(1.0 / 2.2))
}

fn check(d: &Tensor, r: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    if d.shape() != r.shape() {
        return Err(TensorError::Shape { op, detail: format!("{:?} vs {:?}", d.shape(), r.shape()) }.into());
    }
    Ok(d.chw()?)
}

fn clip(v: f32) -> f64 {
    (v as f64).clamp(0.0, 1.0)
}

pub fn mse(d: &Tensor, r: &Tensor) -> Result<f64> {
    check(d, r, "mse")?;
    let n = d.len().max(1) as f64;
    Ok(d.data().iter().zip(r.data()).map(|(&a, &b)| (clip(a) - clip(b)).powi(2)).sum::<f64>() / n)
}

pub fn rmse(d: &Tensor, r: &Tensor) -> Result<f64> {
    Ok(mse(d, r)?.sqrt())
}

/// Peak 1.0; identical images give [`PSNR_CAP`].
pub fn psnr(d: &Tensor, r: &Tensor) -> Result<f64> {
    let m = mse(d, r)?;
    Ok(if m == 0.0 { PSNR_CAP } else { (10.0 * (1.0 / m).log10()).min(PSNR_CAP) })
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let g: Vec<f64> = (0..size).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all valid window positions, per channel, then averaged over channels.
/// Images smaller than the window use the largest odd window that fits.
pub fn ssim(d: &Tensor, r: &Tensor) -> Result<f64> {
    let (c, h, w) = check(d, r, "ssim")?;
    let mut size = SSIM_WINDOW.min(h).min(w);
    if size % 2 == 0 {
        size -= 1;
    }
    let win = gaussian_window(size, SSIM_SIGMA);
    let (c1, c2) = ((SSIM_K1).powi(2), (SSIM_K2).powi(2));
    let plane = h * w;
    let mut total = 0.0;
    for ch in 0..c {
        let a: Vec<f64> = d.data()[ch * plane..(ch + 1) * plane].iter().map(|&v| clip(v)).collect();
        let b: Vec<f64> = r.data()[ch * plane..(ch + 1) * plane].iter().map(|&v| clip(v)).collect();
        let mut sum = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - size {
            for x0 in 0..=w - size {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, wy) in win.iter().enumerate() {
                    for (i, wx) in win.iter().enumerate() {
                        let k = wy * wx;
                        let p = (y0 + j) * w + x0 + i;
                        ma += k * a[p];
                        mb += k * b[p];
                        saa += k * a[p] * a[p];
                        sbb += k * b[p] * b[p];
                        sab += k * a[p] * b[p];
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    Ok(total / c as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
}

pub fn all(d: &Tensor, r: &Tensor) -> Result<Metrics> {
    Ok(Metrics { psnr: psnr(d, r)?, ssim: ssim(d, r)?, rmse: rmse(d, r)? })
}
