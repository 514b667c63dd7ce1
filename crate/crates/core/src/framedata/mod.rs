//! Frame and dataset persistence, plus the radiometric transforms around the networks.

pub mod pfm;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathtracer::{feature, render_frame, FrameBundle, SamplingMode, Scene};
use crate::error::TensorError;
use crate::tensor::Tensor;

/// Added to albedo before dividing so black surfaces do not blow up.
pub const DEMODULATION_EPS: f32 = 1e-3;

pub fn demodulate(color: &Tensor, albedo: &Tensor) -> Result<Tensor> {
    zip(color, albedo, "demodulate", |c, a| c / (a + DEMODULATION_EPS))
}

pub fn remodulate(irradiance: &Tensor, albedo: &Tensor) -> Result<Tensor> {
    zip(irradiance, albedo, "remodulate", |e, a| e * (a + DEMODULATION_EPS))
}

fn zip(a: &Tensor, b: &Tensor, op: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape { op, detail: format!("{:?} vs {:?}", a.shape(), b.shape()) }.into());
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::new(a.shape().to_vec(), data)?)
}

/// `ln(1 + x)`; rejects negative or non-finite input.
pub fn log_encode(x: &Tensor) -> Result<Tensor> {
    if let Some((index, &value)) = x.data().iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(TensorError::Domain { op: "log_encode", index, value: value as f64 }.into());
    }
    Ok(x.map(|v| v.ln_1p()))
}

/// `exp(y) - 1`; rejects negative or non-finite input.
pub fn log_decode(y: &Tensor) -> Result<Tensor> {
    if let Some((index, &value)) = y.data().iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(TensorError::Domain { op: "log_decode", index, value: value as f64 }.into());
    }
    Ok(y.map(|v| v.exp_m1()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameMeta {
    frame_index: usize,
    width: usize,
    height: usize,
    sampling_mode: SamplingMode,
    depth_scale: f32,
    has_reference: bool,
}

pub fn frame_dir_name(index: usize) -> String {
    format!("frame_{index:04}")
}

/// Files written for every frame (plus `reference.pfm` when a reference exists).
pub const FRAME_FILES: [&str; 11] = [
    "frame.json",
    "color.pfm",
    "mask.pfm",
    "albedo.pfm",
    "normal.pfm",
    "shadow.pfm",
    "transparent.pfm",
    "depth.pfm",
    "metallic.pfm",
    "roughness.pfm",
    "motion.pfm",
];

/// Write one bundle under `dir/frame_NNNN/`.
pub fn write_bundle(bundle: &FrameBundle, dir: &Path) -> Result<PathBuf> {
    let fdir = dir.join(frame_dir_name(bundle.frame_index));
    std::fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
    let meta = FrameMeta {
        frame_index: bundle.frame_index,
        width: bundle.width,
        height: bundle.height,
        sampling_mode: bundle.sampling_mode,
        depth_scale: bundle.depth_scale,
        has_reference: bundle.reference.is_some(),
    };
    let meta_path = fdir.join("frame.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
    pfm::write(&fdir.join("color.pfm"), &bundle.color)?;
    pfm::write(&fdir.join("mask.pfm"), &bundle.mask)?;
    for (name, start, count) in feature::PLANES {
        pfm::write(&fdir.join(format!("{name}.pfm")), &bundle.features.channel_slice(start, count)?)?;
    }
    let zero = Tensor::zeros(vec![1, bundle.height, bundle.width]);
    pfm::write(&fdir.join("motion.pfm"), &Tensor::concat(&[&bundle.motion, &zero])?)?;
    if let Some(r) = &bundle.reference {
        pfm::write(&fdir.join("reference.pfm"), r)?;
    }
    Ok(fdir)
}

fn read_plane(path: &Path, channels: usize, width: usize, height: usize) -> Result<Tensor> {
    let t = pfm::read(path)?;
    if t.shape() != [channels, height, width] {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            detail: format!("expected {channels}x{height}x{width}, found {:?}", t.shape()),
        });
    }
    Ok(t)
}

pub fn read_bundle(dir: &Path, index: usize) -> Result<FrameBundle> {
    let fdir = dir.join(frame_dir_name(index));
    let meta_path = fdir.join("frame.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: FrameMeta = serde_json::from_str(&text)
        .map_err(|e| Error::Format { path: meta_path.clone(), offset: 0, detail: e.to_string() })?;
    if meta.frame_index != index {
        return Err(Error::Dataset(format!("{} holds frame {}, expected {index}", meta_path.display(), meta.frame_index)));
    }
    let (w, h) = (meta.width, meta.height);
    let color = read_plane(&fdir.join("color.pfm"), 3, w, h)?;
    let mask = read_plane(&fdir.join("mask.pfm"), 1, w, h)?;
    let planes = feature::PLANES
        .iter()
        .map(|(name, _, count)| read_plane(&fdir.join(format!("{name}.pfm")), *count, w, h))
        .collect::<Result<Vec<_>>>()?;
    let features = Tensor::concat(&planes.iter().collect::<Vec<_>>())?;
    let motion = read_plane(&fdir.join("motion.pfm"), 3, w, h)?.channel_slice(0, 2)?;
    let reference = if meta.has_reference { Some(read_plane(&fdir.join("reference.pfm"), 3, w, h)?) } else { None };
    Ok(FrameBundle {
        frame_index: index,
        width: w,
        height: h,
        color,
        mask,
        features,
        motion,
        reference,
        sampling_mode: meta.sampling_mode,
        depth_scale: meta.depth_scale,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?} (train, val, test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFrame {
    pub index: usize,
    /// Directory relative to the manifest.
    pub dir: String,
    pub split: Split,
}

/// `manifest.json` at the dataset root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub scene: String,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    /// `"quarter"` or `"full:<spp>"`.
    pub sampling_mode: String,
    pub reference_spp: Option<u32>,
    pub seed: u64,
    pub depth_scale: f32,
    pub frames: Vec<ManifestFrame>,
}

/// Default split: the last quarter of the sequence is held out for testing.
pub fn default_split(index: usize, frame_count: usize) -> Split {
    if index >= frame_count - frame_count / 4 {
        Split::Test
    } else {
        Split::Train
    }
}

impl DatasetManifest {
    pub fn path(root: &Path) -> PathBuf {
        root.join("manifest.json")
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = Self::path(root);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path, offset: 0, detail: e.to_string() })
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = Self::path(root);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    /// Check contiguity and that every referenced file exists with the declared resolution.
    pub fn validate(&self, root: &Path) -> Result<()> {
        if self.frames.len() != self.frame_count {
            return Err(Error::Dataset(format!(
                "manifest declares {} frames but lists {}",
                self.frame_count,
                self.frames.len()
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.index != i {
                return Err(Error::Dataset(format!("frame indices not contiguous: position {i} holds frame {}", f.index)));
            }
            let fdir = root.join(&f.dir);
            let files = FRAME_FILES.iter().copied().chain(self.reference_spp.map(|_| "reference.pfm"));
            for name in files {
                let p = fdir.join(name);
                if !p.is_file() {
                    return Err(Error::Dataset(format!("frame {i}: missing {}", p.display())));
                }
                if name.ends_with(".pfm") {
                    let hdr = pfm::read_header(&p)?;
                    if (hdr.width, hdr.height) != (self.width, self.height) {
                        return Err(Error::Dataset(format!(
                            "frame {i}: {} is {}x{}, manifest says {}x{}",
                            p.display(),
                            hdr.width,
                            hdr.height,
                            self.width,
                            self.height
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.frames.iter().filter(|f| f.split == split).map(|f| f.index).collect()
    }
}

/// A loaded dataset: manifest plus every frame in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub frames: Vec<FrameBundle>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(root)?;
        manifest.validate(root)?;
        let frames = manifest.frames.iter().map(|f| read_bundle(root, f.index)).collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, frames })
    }

    /// Maximal runs of consecutive frames tagged `split`.
    pub fn runs(&self, split: Split) -> Vec<std::ops::Range<usize>> {
        let mut runs: Vec<std::ops::Range<usize>> = Vec::new();
        for f in self.manifest.frames.iter().filter(|f| f.split == split) {
            match runs.last_mut() {
                Some(r) if r.end == f.index => r.end += 1,
                _ => runs.push(f.index..f.index + 1),
            }
        }
        runs
    }
}

/// Render frames `0..frames` of `scene` into `root` and write the manifest.
pub fn render_dataset(
    scene: &Scene,
    root: &Path,
    frames: usize,
    mode: SamplingMode,
    reference_spp: Option<u32>,
    seed: u64,
    mut progress: impl FnMut(usize),
) -> Result<DatasetManifest> {
    if frames == 0 {
        return Err(Error::Invalid("dataset needs at least one frame".into()));
    }
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut entries = Vec::with_capacity(frames);
    for i in 0..frames {
        let bundle = render_frame(scene, i, mode, seed, reference_spp)?;
        write_bundle(&bundle, root)?;
        entries.push(ManifestFrame { index: i, dir: frame_dir_name(i), split: default_split(i, frames) });
        progress(i);
    }
    let manifest = DatasetManifest {
        scene: scene.name.clone(),
        frame_count: frames,
        width: scene.width,
        height: scene.height,
        sampling_mode: match mode {
            SamplingMode::Quarter { .. } => "quarter".into(),
            m => m.label(),
        },
        reference_spp,
        seed,
        depth_scale: scene.depth_scale() as f32,
        frames: entries,
    };
    manifest.save(root)?;
    Ok(manifest)
}
