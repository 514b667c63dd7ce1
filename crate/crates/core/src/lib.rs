//! Subpixel-sampled (1/4-spp) path tracing with learned temporal reconstruction.
//!
//! The crate covers the whole pipeline: a deterministic CPU path tracer that
//! produces sparse color, mask maps, GBuffers and motion vectors; frame storage
//! and radiometric transforms; a warping operator; the temporal feature
//! accumulator and multi-scale reconstruction network on top of a small
//! reverse-mode tensor engine; the training loss stack and image metrics; and
//! the training/evaluation driver.

pub mod accumulator;
pub mod error;
pub mod framedata;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod params;
pub mod pathtracer;
pub mod reconstructor;
pub mod reprojection;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
