//! Backward warping of previous-frame images into the current pixel grid.

use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::tensor::{Tensor, WarpTaps};

#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    pub warped: Tensor,
    /// `[1, H, W]`, 1 where the lookup stayed inside the previous frame.
    pub validity: Tensor,
}

/// Bilinear taps for sampling the previous frame at `p + motion(p)`.
///
/// A lookup is invalid when any tap with nonzero weight falls outside the frame.
pub fn warp_taps(motion: &Tensor) -> Result<Arc<WarpTaps>> {
    let (c, h, w) = motion.chw()?;
    if c != 2 {
        return Err(TensorError::Shape { op: "warp", detail: format!("motion needs 2 channels, got {c}") }.into());
    }
    let plane = h * w;
    let m = motion.data();
    let mut taps = Vec::with_capacity(plane);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let sx = x as f64 + m[p] as f64;
            let sy = y as f64 + m[plane + p] as f64;
            if !(sx.is_finite() && sy.is_finite()) {
                taps.push(None);
                continue;
            }
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let corners = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1.0, y0, fx * (1.0 - fy)),
                (x0, y0 + 1.0, (1.0 - fx) * fy),
                (x0 + 1.0, y0 + 1.0, fx * fy),
            ];
            let mut out = [(0u32, 0.0f64); 4];
            let mut valid = true;
            for (k, &(tx, ty, wgt)) in corners.iter().enumerate() {
                if wgt == 0.0 {
                    continue;
                }
                if tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
                    valid = false;
                    break;
                }
                out[k] = ((ty as usize * w + tx as usize) as u32, wgt);
            }
            taps.push(valid.then_some(out));
        }
    }
    Ok(Arc::new(WarpTaps { height: h, width: w, taps }))
}

impl WarpTaps {
    pub fn validity(&self) -> Tensor {
        Tensor::from_fn(vec![1, self.height, self.width], |i| if self.taps[i].is_some() { 1.0 } else { 0.0 })
    }

    /// Warp a CHW image (no gradient tracking).
    pub fn warp_image(&self, prev: &Tensor) -> Result<Tensor> {
        let (c, h, w) = prev.chw()?;
        if (h, w) != (self.height, self.width) {
            return Err(TensorError::Shape {
                op: "warp",
                detail: format!("image {h}x{w} vs motion {}x{}", self.height, self.width),
            }
            .into());
        }
        Ok(Tensor::new(vec![c, h, w], self.apply(prev.data(), c))?)
    }
}

pub fn warp(prev: &Tensor, motion: &Tensor) -> Result<WarpResult> {
    let taps = warp_taps(motion)?;
    let (_, h, w) = prev.chw()?;
    let (_, mh, mw) = motion.chw()?;
    if (h, w) != (mh, mw) {
        return Err(TensorError::Shape { op: "warp", detail: format!("image {h}x{w} vs motion {mh}x{mw}") }.into());
    }
    Ok(WarpResult { warped: taps.warp_image(prev)?, validity: taps.validity() })
}
