use std::path::Path;

use image::RgbImage;
use ssr_core::metrics::tonemap;
use ssr_core::tensor::Tensor;

use crate::CliError;

/// Tone-map a linear RGB tensor and write it as an 8-bit PNG.
pub fn write_png(path: &Path, linear: &Tensor) -> Result<(), CliError> {
    to_rgb(&tonemap(linear))?
        .save(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Display-range tensor to an image; single-channel inputs are shown as grey.
pub fn to_rgb(display: &Tensor) -> Result<RgbImage, CliError> {
    let (c, h, w) = display.chw().map_err(|e| CliError::Runtime(e.to_string()))?;
    if c != 3 && c != 1 {
        return Err(CliError::Runtime(format!("cannot show a {c}-channel image")));
    }
    let plane = h * w;
    let d = display.data();
    let byte = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let p = y as usize * w + x as usize;
        let ch = |k: usize| byte(d[if c == 3 { k * plane + p } else { p }]);
        image::Rgb([ch(0), ch(1), ch(2)])
    }))
}

/// Panels side by side, all of the same size.
pub fn hstack(panels: &[RgbImage]) -> RgbImage {
    let (w, h) = panels[0].dimensions();
    let mut out = RgbImage::new(w * panels.len() as u32, h);
    for (i, p) in panels.iter().enumerate() {
        for (x, y, px) in p.enumerate_pixels() {
            out.put_pixel(i as u32 * w + x, y, *px);
        }
    }
    out
}
