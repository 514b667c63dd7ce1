use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Channel layout of [`FrameBundle::features`].
pub mod feature {
    pub const ALBEDO: usize = 0;
    pub const NORMAL: usize = 3;
    pub const SHADOW: usize = 6;
    pub const TRANSPARENT: usize = 9;
    pub const DEPTH: usize = 12;
    pub const METALLIC: usize = 13;
    pub const ROUGHNESS: usize = 14;
    pub const COUNT: usize = 15;

    /// `(name, first channel, channel count)` in storage order.
    pub const PLANES: [(&str, usize, usize); 7] = [
        ("albedo", ALBEDO, 3),
        ("normal", NORMAL, 3),
        ("shadow", SHADOW, 3),
        ("transparent", TRANSPARENT, 3),
        ("depth", DEPTH, 1),
        ("metallic", METALLIC, 1),
        ("roughness", ROUGHNESS, 1),
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingMode {
    /// One path per 2×2 tile at the in-tile offset for `phase`.
    Quarter { phase: u8 },
    /// `spp` paths at every pixel.
    Full { spp: u32 },
}

impl SamplingMode {
    pub fn quarter_for_frame(frame_index: usize) -> Self {
        SamplingMode::Quarter { phase: (frame_index % 4) as u8 }
    }

    pub fn label(&self) -> String {
        match self {
            SamplingMode::Quarter { .. } => "quarter".into(),
            SamplingMode::Full { spp } => format!("full:{spp}"),
        }
    }
}

/// `quarter` (phase 0; renderers advance the phase per frame) or `full:<spp>`.
impl std::str::FromStr for SamplingMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let bad = || crate::Error::Config(format!("sampling mode {s:?} is not `quarter` or `full:<spp>`"));
        match s.split_once(':') {
            None if s == "quarter" => Ok(SamplingMode::Quarter { phase: 0 }),
            Some(("full", spp)) => match spp.parse::<u32>() {
                Ok(spp) if spp > 0 => Ok(SamplingMode::Full { spp }),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// Everything rendered for one frame. Images are CHW tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBundle {
    pub frame_index: usize,
    pub width: usize,
    pub height: usize,
    /// Path-traced radiance; zero at unsampled pixels in quarter mode.
    pub color: Tensor,
    /// 1 where a path was traced this frame.
    pub mask: Tensor,
    /// 15 channels, see [`feature`]. Depth is raw view-space depth (`+inf` on misses).
    pub features: Tensor,
    /// Backward motion in pixels: the surface at `p` was at `p + motion(p)` one frame earlier.
    pub motion: Tensor,
    pub reference: Option<Tensor>,
    pub sampling_mode: SamplingMode,
    /// Depth normaliser; divide depth by this to map the scene into [0, 1].
    pub depth_scale: f32,
}

impl FrameBundle {
    pub fn albedo(&self) -> Tensor {
        self.features.channel_slice(feature::ALBEDO, 3).expect("albedo plane")
    }

    pub fn plane(&self, name: &str) -> Option<Tensor> {
        feature::PLANES
            .iter()
            .find(|(n, _, _)| *n == name)
            .map(|&(_, start, count)| self.features.channel_slice(start, count).expect("feature plane"))
    }
}
