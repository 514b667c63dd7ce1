//! Procedural scene description, its JSON schema, and ray queries against it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::math::{Ray, Vec3};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    #[serde(default)]
    pub name: String,
    pub albedo: Vec3,
    #[serde(default)]
    pub metallic: f64,
    #[serde(default = "one")]
    pub roughness: f64,
    /// Per-channel straight-through transmission; zero means opaque.
    #[serde(default)]
    pub transparent: Vec3,
    #[serde(default)]
    pub emissive: Vec3,
}

fn one() -> f64 {
    1.0
}

impl Material {
    pub fn diffuse(name: &str, albedo: Vec3) -> Self {
        Self {
            name: name.into(),
            albedo,
            metallic: 0.0,
            roughness: 1.0,
            transparent: Vec3::ZERO,
            emissive: Vec3::ZERO,
        }
    }

    pub fn emitter(name: &str, radiance: Vec3) -> Self {
        Self { emissive: radiance, ..Self::diffuse(name, Vec3::ZERO) }
    }

    pub fn is_emissive(&self) -> bool {
        self.emissive.max_elem() > 0.0
    }

    pub fn is_transparent(&self) -> bool {
        self.transparent.max_elem() > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Axis-aligned box.
    Box { min: Vec3, max: Vec3 },
    /// Parallelogram `origin + s·u + t·v`, `s, t ∈ [0, 1]`; facing `u × v`.
    Quad { origin: Vec3, u: Vec3, v: Vec3 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetKey {
    pub frame: f64,
    pub offset: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub shape: Shape,
    /// Index into [`Scene::materials`].
    pub material: usize,
    /// Translation track, linearly interpolated and clamped at the ends.
    #[serde(default)]
    pub keyframes: Vec<OffsetKey>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraKey {
    pub frame: f64,
    pub position: Vec3,
    pub look_at: Vec3,
    #[serde(default = "world_up")]
    pub up: Vec3,
}

fn world_up() -> Vec3 {
    Vec3::new(0.0, 1.0, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraTrack {
    pub vfov_deg: f64,
    pub keyframes: Vec<CameraKey>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Uniform radiance returned by rays that leave the scene.
    #[serde(default)]
    pub environment: Vec3,
    pub camera: CameraTrack,
    pub materials: Vec<Material>,
    pub primitives: Vec<Primitive>,
}

/// Pinhole camera at one instant.
#[derive(Clone, Copy, Debug)]
pub struct Camera {
    pub position: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub tan_half_fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    /// Ray through continuous image position `(px, py)`; pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.
    pub fn ray(&self, px: f64, py: f64) -> Ray {
        let sx = (2.0 * px / self.width as f64 - 1.0) * self.tan_half_fov * self.aspect();
        let sy = (1.0 - 2.0 * py / self.height as f64) * self.tan_half_fov;
        Ray { origin: self.position, dir: (self.forward + self.right * sx + self.up * sy).normalized() }
    }

    /// Continuous image position of a world point, or `None` behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        self.project_direction(p - self.position)
    }

    /// Image position of a direction (point at infinity).
    pub fn project_direction(&self, d: Vec3) -> Option<(f64, f64)> {
        let z = d.dot(self.forward);
        if z <= 1e-12 {
            return None;
        }
        let sx = d.dot(self.right) / (z * self.tan_half_fov * self.aspect());
        let sy = d.dot(self.up) / (z * self.tan_half_fov);
        Some(((sx + 1.0) * 0.5 * self.width as f64, (1.0 - sy) * 0.5 * self.height as f64))
    }

    /// Linear view-space depth of a world point.
    pub fn view_depth(&self, p: Vec3) -> f64 {
        (p - self.position).dot(self.forward)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    /// Geometric normal facing against the incoming ray.
    pub normal: Vec3,
    /// Whether the ray struck the side the shape's outward normal points to.
    pub front_face: bool,
    pub primitive: usize,
}

pub const RAY_EPS: f64 = 1e-6;

fn lerp_track<K>(keys: &[K], frame: f64, time: impl Fn(&K) -> f64, value: impl Fn(&K, &K, f64) -> Vec3) -> Option<Vec3> {
    let first = keys.first()?;
    if frame <= time(first) {
        return Some(value(first, first, 0.0));
    }
    for pair in keys.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if frame <= time(b) {
            let span = time(b) - time(a);
            let t = if span > 0.0 { (frame - time(a)) / span } else { 1.0 };
            return Some(value(a, b, t));
        }
    }
    let last = keys.last()?;
    Some(value(last, last, 0.0))
}

impl Primitive {
    pub fn offset_at(&self, frame: f64) -> Vec3 {
        lerp_track(&self.keyframes, frame, |k| k.frame, |a, b, t| a.offset.lerp(b.offset, t)).unwrap_or(Vec3::ZERO)
    }

    fn intersect(&self, ray: &Ray, offset: Vec3, t_max: f64) -> Option<(f64, Vec3)> {
        let o = ray.origin - offset;
        let d = ray.dir;
        match self.shape {
            Shape::Sphere { center, radius } => {
                let oc = o - center;
                let b = oc.dot(d);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [-b - sq, -b + sq].into_iter().find(|&t| t > RAY_EPS && t < t_max)?;
                Some((t, (o + d * t - center) / radius))
            }
            Shape::Box { min, max } => {
                let mut t0 = RAY_EPS;
                let mut t1 = t_max;
                let mut n_enter = Vec3::ZERO;
                let mut n_exit = Vec3::ZERO;
                for axis in 0..3 {
                    let inv = 1.0 / d[axis];
                    let (mut ta, mut tb) = ((min[axis] - o[axis]) * inv, (max[axis] - o[axis]) * inv);
                    let mut n = axis_unit(axis) * -1.0;
                    if inv < 0.0 {
                        std::mem::swap(&mut ta, &mut tb);
                        n = -n;
                    }
                    if ta > t0 {
                        t0 = ta;
                        n_enter = n;
                    }
                    if tb < t1 {
                        t1 = tb;
                        n_exit = -n;
                    }
                    if t0 > t1 {
                        return None;
                    }
                }
                if n_enter != Vec3::ZERO {
                    Some((t0, n_enter))
                } else if t1 < t_max && n_exit != Vec3::ZERO {
                    // origin inside the box
                    Some((t1, n_exit))
                } else {
                    None
                }
            }
            Shape::Quad { origin, u, v } => {
                let n = u.cross(v);
                let denom = n.dot(d);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (origin - o).dot(n) / denom;
                if t <= RAY_EPS || t >= t_max {
                    return None;
                }
                let rel = o + d * t - origin;
                let nn = n.dot(n);
                let s = rel.cross(v).dot(n) / nn;
                let r = u.cross(rel).dot(n) / nn;
                if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&r) {
                    return None;
                }
                Some((t, n.normalized()))
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Quad { u, v, .. } => u.cross(v).length(),
            Shape::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Shape::Box { min, max } => {
                let e = max - min;
                2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
            }
        }
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        match self.shape {
            Shape::Sphere { center, radius } => (center - Vec3::splat(radius), center + Vec3::splat(radius)),
            Shape::Box { min, max } => (min, max),
            Shape::Quad { origin, u, v } => {
                let pts = [origin, origin + u, origin + v, origin + u + v];
                let lo = pts.iter().fold(Vec3::splat(f64::INFINITY), |a, p| vmin(a, *p));
                let hi = pts.iter().fold(Vec3::splat(f64::NEG_INFINITY), |a, p| vmax(a, *p));
                (lo, hi)
            }
        }
    }
}

fn axis_unit(axis: usize) -> Vec3 {
    match axis {
        0 => Vec3::new(1.0, 0.0, 0.0),
        1 => Vec3::new(0.0, 1.0, 0.0),
        _ => Vec3::new(0.0, 0.0, 1.0),
    }
}

fn vmin(a: Vec3, b: Vec3) -> Vec3 {
    Vec3::new(a.x.min(b.x), a.y.min(b.y), a.z.min(b.z))
}

fn vmax(a: Vec3, b: Vec3) -> Vec3 {
    Vec3::new(a.x.max(b.x), a.y.max(b.y), a.z.max(b.z))
}

/// Scene state frozen at one frame: animated offsets resolved.
pub struct FrameScene<'a> {
    pub scene: &'a Scene,
    pub frame: f64,
    pub offsets: Vec<Vec3>,
    pub camera: Camera,
    /// Indices of emissive quads.
    pub lights: Vec<usize>,
}

impl<'a> FrameScene<'a> {
    pub fn material(&self, primitive: usize) -> &Material {
        &self.scene.materials[self.scene.primitives[primitive].material]
    }

    pub fn intersect(&self, ray: &Ray, t_max: f64) -> Option<Hit> {
        let mut best: Option<(f64, Vec3, usize)> = None;
        let mut limit = t_max;
        for (i, p) in self.scene.primitives.iter().enumerate() {
            if let Some((t, n)) = p.intersect(ray, self.offsets[i], limit) {
                limit = t;
                best = Some((t, n, i));
            }
        }
        best.map(|(t, n, i)| {
            let front_face = n.dot(ray.dir) < 0.0;
            Hit { t, point: ray.at(t), normal: if front_face { n } else { -n }, front_face, primitive: i }
        })
    }

    /// Per-channel transmittance along a segment: transparent surfaces tint, anything else blocks.
    pub fn transmittance(&self, from: Vec3, to: Vec3) -> Vec3 {
        let delta = to - from;
        let dist = delta.length();
        let dir = delta / dist;
        let mut origin = from;
        let mut remaining = dist * (1.0 - 1e-7) - RAY_EPS;
        let mut tr = Vec3::ONE;
        for _ in 0..16 {
            let ray = Ray { origin, dir };
            let Some(hit) = self.intersect(&ray, remaining) else { return tr };
            let m = self.material(hit.primitive);
            if !m.is_transparent() || m.is_emissive() {
                return Vec3::ZERO;
            }
            tr = tr.mul_elem(m.transparent);
            origin = hit.point;
            remaining -= hit.t;
        }
        Vec3::ZERO
    }
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scene(format!("{}: {}", self.name, msg)));
        if self.width == 0 || self.height == 0 || self.width % 2 != 0 || self.height % 2 != 0 {
            return bad(format!("resolution {}x{} must be even and nonzero", self.width, self.height));
        }
        if self.camera.keyframes.is_empty() {
            return bad("camera needs at least one keyframe".into());
        }
        if !(self.camera.vfov_deg > 0.0 && self.camera.vfov_deg < 180.0) {
            return bad(format!("vfov {} outside (0, 180)", self.camera.vfov_deg));
        }
        for (i, m) in self.materials.iter().enumerate() {
            let unit = |v: f64| (0.0..=1.0).contains(&v);
            let unit3 = |v: Vec3| unit(v.x) && unit(v.y) && unit(v.z);
            if !unit3(m.albedo) || !unit(m.metallic) || !unit(m.roughness) || !unit3(m.transparent) {
                return bad(format!("material {} ({}) has a scalar outside [0, 1]", i, m.name));
            }
            if !(m.emissive.is_finite() && m.emissive.x >= 0.0 && m.emissive.y >= 0.0 && m.emissive.z >= 0.0) {
                return bad(format!("material {} ({}) has negative emission", i, m.name));
            }
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if p.material >= self.materials.len() {
                return bad(format!("primitive {} references missing material {}", i, p.material));
            }
            if self.materials[p.material].is_emissive() && !matches!(p.shape, Shape::Quad { .. }) {
                return bad(format!("primitive {} is emissive but not a quad", i));
            }
        }
        let has_light = self.primitives.iter().any(|p| self.materials[p.material].is_emissive());
        if !has_light && self.environment.max_elem() <= 0.0 {
            return bad("scene has no light".into());
        }
        for f in 0..self.frames.max(1) {
            let c = self.camera_at(f as f64);
            if !(c.position.is_finite() && c.forward.is_finite() && c.right.is_finite() && c.up.is_finite()) {
                return bad(format!("camera pose is degenerate at frame {}", f));
            }
        }
        Ok(())
    }

    pub fn camera_at(&self, frame: f64) -> Camera {
        let (pos, target, up) = lerp_track(
            &self.camera.keyframes,
            frame,
            |k| k.frame,
            |a, b, t| a.position.lerp(b.position, t),
        )
        .map(|p| {
            let target =
                lerp_track(&self.camera.keyframes, frame, |k| k.frame, |a, b, t| a.look_at.lerp(b.look_at, t)).unwrap();
            let up = lerp_track(&self.camera.keyframes, frame, |k| k.frame, |a, b, t| a.up.lerp(b.up, t)).unwrap();
            (p, target, up)
        })
        .unwrap_or((Vec3::ZERO, Vec3::new(0.0, 0.0, -1.0), world_up()));
        let forward = (target - pos).normalized();
        let right = forward.cross(up).normalized();
        let up = right.cross(forward);
        Camera {
            position: pos,
            forward,
            right,
            up,
            tan_half_fov: (self.camera.vfov_deg.to_radians() * 0.5).tan(),
            width: self.width,
            height: self.height,
        }
    }

    pub fn at_frame(&self, frame: usize) -> FrameScene<'_> {
        let f = frame as f64;
        FrameScene {
            scene: self,
            frame: f,
            offsets: self.primitives.iter().map(|p| p.offset_at(f)).collect(),
            camera: self.camera_at(f),
            lights: self
                .primitives
                .iter()
                .enumerate()
                .filter(|(_, p)| self.materials[p.material].is_emissive())
                .map(|(i, _)| i)
                .collect(),
        }
    }

    /// Diagonal of the bounds of all geometry and camera positions, used to normalise depth.
    pub fn depth_scale(&self) -> f64 {
        let (mut lo, mut hi) = (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY));
        for p in &self.primitives {
            let (a, b) = p.bounds();
            lo = vmin(lo, a);
            hi = vmax(hi, b);
        }
        for k in &self.camera.keyframes {
            lo = vmin(lo, k.position);
            hi = vmax(hi, k.position);
        }
        if !lo.is_finite() {
            return 1.0;
        }
        ((hi - lo).length()).max(1e-3)
    }

    pub fn with_resolution(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }
}
