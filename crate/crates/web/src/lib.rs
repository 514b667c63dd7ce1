//! Browser demo: step a built-in scene with quarter-rate sampling, inspect the sample mask and GBuffer planes,
//! and tune the history weight of the non-learned temporal reconstruction.

use ssr_core::metrics::tonemap;
use ssr_core::model::{guided_fill, Baseline};
use ssr_core::pathtracer::{self, feature, render_frame, render_reference, FrameBundle, SamplingMode, Scene};
use ssr_core::tensor::Tensor;
use wasm_bindgen::prelude::*;

/// Views accepted by [`Demo::image`].
pub const VIEWS: [&str; 8] = ["input", "mask", "fill", "reconstruction", "reference", "albedo", "normal", "depth"];

const REFERENCE_SPP: u32 = 16;

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
    seed: u64,
    alpha: f32,
    next_frame: usize,
    baseline: Baseline,
    bundle: Option<FrameBundle>,
    reconstruction: Option<Tensor>,
    reference: Option<Tensor>,
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// `width` and `height` must be even.
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &str, width: usize, height: usize, seed: u64) -> Result<Demo, JsError> {
        let mut s = pathtracer::builtin(scene).ok_or_else(|| JsError::new(&format!("unknown scene {scene:?}")))?;
        s.width = width;
        s.height = height;
        s.validate().map_err(js_err)?;
        Ok(Demo {
            scene: s,
            seed,
            alpha: ssr_core::model::BASELINE_ALPHA,
            next_frame: 0,
            baseline: Baseline::new(),
            bundle: None,
            reconstruction: None,
            reference: None,
        })
    }

    pub fn scenes() -> Vec<String> {
        pathtracer::BUILTIN_SCENES.iter().map(|s| s.to_string()).collect()
    }

    pub fn views() -> Vec<String> {
        VIEWS.iter().map(|s| s.to_string()).collect()
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.scene.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.scene.height
    }

    #[wasm_bindgen(getter)]
    pub fn frames(&self) -> usize {
        self.scene.frames
    }

    /// Index of the frame on display, if any.
    #[wasm_bindgen(getter)]
    pub fn frame(&self) -> Option<usize> {
        self.bundle.as_ref().map(|b| b.frame_index)
    }

    #[wasm_bindgen(getter)]
    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    /// History weight of the temporal blend. Takes effect from the next frame; history restarts.
    #[wasm_bindgen(setter)]
    pub fn set_alpha(&mut self, alpha: f32) {
        self.alpha = alpha.clamp(0.0, 1.0);
        self.baseline = Baseline::with_alpha(self.alpha);
    }

    /// Render the next frame at one path per 2×2 tile and fold it into the reconstruction.
    /// Wraps to frame 0 after the last frame. Returns the new frame index.
    pub fn step(&mut self) -> Result<usize, JsError> {
        let index = self.next_frame;
        if index == 0 {
            self.baseline = Baseline::with_alpha(self.alpha);
        }
        let bundle = render_frame(&self.scene, index, SamplingMode::quarter_for_frame(index), self.seed, None)
            .map_err(js_err)?;
        self.reconstruction = Some(self.baseline.step(&bundle).map_err(js_err)?);
        self.bundle = Some(bundle);
        self.reference = None;
        self.next_frame = (index + 1) % self.scene.frames;
        Ok(index)
    }

    /// RGBA8 pixels of `view` for the current frame, tonemapped. See [`VIEWS`].
    pub fn image(&mut self, view: &str) -> Result<Vec<u8>, JsError> {
        if self.bundle.is_none() {
            self.step()?;
        }
        let b = self.bundle.as_ref().expect("frame rendered");
        let img = match view {
            "input" => b.color.clone(),
            "mask" => b.mask.clone(),
            "fill" => guided_fill(b).map_err(js_err)?,
            "reconstruction" => self.reconstruction.clone().expect("set with the frame"),
            "reference" => {
                if self.reference.is_none() {
                    self.reference =
                        Some(render_reference(&self.scene, b.frame_index, REFERENCE_SPP, self.seed).map_err(js_err)?);
                }
                self.reference.clone().expect("rendered")
            }
            "albedo" => b.albedo(),
            "normal" => b.features.channel_slice(feature::NORMAL, 3).map_err(js_err)?.map(|v| 0.5 * v + 0.5),
            "depth" => {
                let scale = b.depth_scale.max(f32::MIN_POSITIVE);
                let d = b.features.channel_slice(feature::DEPTH, 1).map_err(js_err)?;
                d.map(|v| if v.is_finite() { 1.0 - (v / scale).clamp(0.0, 1.0) } else { 0.0 })
            }
            other => return Err(JsError::new(&format!("unknown view {other:?}"))),
        };
        Ok(rgba(&img))
    }
}

/// Tonemapped 1- or 3-channel CHW image as interleaved RGBA8.
pub fn rgba(linear: &Tensor) -> Vec<u8> {
    let t = tonemap(linear);
    let (c, h, w) = t.chw().expect("image tensor");
    let plane = h * w;
    let mut out = Vec::with_capacity(4 * plane);
    for i in 0..plane {
        for k in 0..3 {
            let ch = if c == 1 { 0 } else { k };
            out.push((t.data()[ch * plane + i] * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}
