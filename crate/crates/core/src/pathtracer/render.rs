use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bsdf::Bsdf;
use super::bundle::{feature, FrameBundle, SamplingMode};
use super::math::{Ray, Vec3};
use super::rng::{hash, PathRng};
use super::scene::{FrameScene, Hit, Scene, Shape, RAY_EPS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Scattering events per path (fixed depth, no Russian roulette).
pub const MAX_BOUNCES: usize = 3;
/// Light samples per light for the shadow buffer (a 4×4 stratified grid).
pub const SHADOW_GRID: usize = 4;
const MAX_PASS_THROUGH: usize = 16;

/// In-tile offset traced in `frame_index`. Phases cycle (0,0) → (1,0) → (1,1) → (0,1).
pub fn sample_position(tile: (usize, usize), frame_index: usize) -> (usize, usize) {
    const OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];
    let (dx, dy) = OFFSETS[frame_index % 4];
    (2 * tile.0 + dx, 2 * tile.1 + dy)
}

/// Binary mask of the pixels traced in quarter mode.
pub fn quarter_mask(width: usize, height: usize, frame_index: usize) -> Tensor {
    let mut mask = Tensor::zeros(vec![1, height, width]);
    for ty in 0..height / 2 {
        for tx in 0..width / 2 {
            let (px, py) = sample_position((tx, ty), frame_index);
            mask.set(0, py, px, 1.0);
        }
    }
    mask
}

fn pixel_rng(seed: u64, frame: usize, width: usize, x: usize, y: usize, sample: u32) -> PathRng {
    PathRng::new(seed, frame as u64, (y * width + x) as u64, sample as u64)
}

/// Sub-pixel position of sample `s` out of `spp`: stratified on a k×k grid for the first k² samples.
fn jitter(s: u32, spp: u32, rng: &mut PathRng) -> (f64, f64) {
    let k = (spp as f64).sqrt().floor().max(1.0) as u32;
    let (u, v) = rng.next_pair();
    if s < k * k {
        (((s % k) as f64 + u) / k as f64, ((s / k) as f64 + v) / k as f64)
    } else {
        (u, v)
    }
}

fn sample_light(fs: &FrameScene, light: usize, u: f64, v: f64) -> (Vec3, Vec3, f64) {
    let prim = &fs.scene.primitives[light];
    match prim.shape {
        Shape::Quad { origin, u: eu, v: ev } => {
            let p = origin + fs.offsets[light] + eu * u + ev * v;
            (p, eu.cross(ev).normalized(), prim.area())
        }
        _ => unreachable!("lights are quads"),
    }
}

/// One-sample next-event estimate of direct light at `hit`.
fn direct_light(fs: &FrameScene, hit: &Hit, bsdf: &Bsdf, wo: Vec3, rng: &mut PathRng) -> Vec3 {
    let pick = rng.next_f64();
    let (u, v) = rng.next_pair();
    if fs.lights.is_empty() {
        return Vec3::ZERO;
    }
    let n_lights = fs.lights.len();
    let light = fs.lights[((pick * n_lights as f64) as usize).min(n_lights - 1)];
    let (lp, ln, area) = sample_light(fs, light, u, v);
    let to_light = lp - hit.point;
    let dist2 = to_light.dot(to_light);
    let wi = to_light / dist2.sqrt();
    let cos_l = ln.dot(-wi);
    let cos_s = hit.normal.dot(wi);
    if cos_l <= 0.0 || cos_s <= 0.0 {
        return Vec3::ZERO;
    }
    let f = bsdf.eval(hit.normal, wo, wi);
    if f == Vec3::ZERO {
        return Vec3::ZERO;
    }
    let tr = fs.transmittance(hit.point, lp);
    if tr == Vec3::ZERO {
        return Vec3::ZERO;
    }
    let le = fs.material(light).emissive;
    f.mul_elem(le).mul_elem(tr) * (cos_s * cos_l / dist2 * area * n_lights as f64)
}

/// Unidirectional path tracer with next-event estimation.
pub fn radiance(fs: &FrameScene, mut ray: Ray, rng: &mut PathRng) -> Vec3 {
    let env = fs.scene.environment;
    let mut l = Vec3::ZERO;
    let mut beta = Vec3::ONE;
    let mut count_emission = true;
    let mut depth = 0;
    let mut passes = 0;
    loop {
        let Some(hit) = fs.intersect(&ray, f64::INFINITY) else {
            l += beta.mul_elem(env);
            break;
        };
        let m = fs.material(hit.primitive);
        if m.is_emissive() {
            if count_emission && hit.front_face {
                l += beta.mul_elem(m.emissive);
            }
            break;
        }
        if m.is_transparent() {
            if passes == MAX_PASS_THROUGH {
                break;
            }
            beta = beta.mul_elem(m.transparent);
            ray = Ray { origin: hit.point, dir: ray.dir };
            passes += 1;
            continue;
        }
        let bsdf = Bsdf::new(m);
        let wo = -ray.dir;
        l += beta.mul_elem(direct_light(fs, &hit, &bsdf, wo, rng));
        depth += 1;
        if depth == MAX_BOUNCES {
            break;
        }
        let (ul, u1) = rng.next_pair();
        let u2 = rng.next_f64();
        let Some(s) = bsdf.sample(hit.normal, wo, ul, u1, u2) else { break };
        beta = beta.mul_elem(s.weight);
        ray = Ray { origin: hit.point, dir: s.wi };
        count_emission = false;
    }
    l
}

/// Path-traced color plane plus the number of camera paths traced.
pub struct TraceOutput {
    pub color: Tensor,
    pub paths: usize,
}

/// The sampling stage alone: no GBuffer work.
pub fn trace_color(scene: &Scene, frame_index: usize, mode: SamplingMode, seed: u64) -> TraceOutput {
    let fs = scene.at_frame(frame_index);
    let (w, h) = (scene.width, scene.height);
    let rows: Vec<(Vec<[f32; 3]>, usize)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![[0.0f32; 3]; w];
            let mut paths = 0;
            for (x, out) in row.iter_mut().enumerate() {
                let spp = match mode {
                    SamplingMode::Quarter { phase } => {
                        if sample_position((x / 2, y / 2), phase as usize) != (x, y) {
                            continue;
                        }
                        1
                    }
                    SamplingMode::Full { spp } => spp,
                };
                let mut acc = Vec3::ZERO;
                for s in 0..spp {
                    let mut rng = pixel_rng(seed, frame_index, w, x, y, s);
                    let (jx, jy) = jitter(s, spp, &mut rng);
                    let ray = fs.camera.ray(x as f64 + jx, y as f64 + jy);
                    acc += radiance(&fs, ray, &mut rng);
                }
                paths += spp as usize;
                let c = acc / spp as f64;
                *out = [c.x as f32, c.y as f32, c.z as f32];
            }
            (row, paths)
        })
        .collect();
    let mut color = Tensor::zeros(vec![3, h, w]);
    let mut paths = 0;
    for (y, (row, n)) in rows.into_iter().enumerate() {
        paths += n;
        for (x, c) in row.into_iter().enumerate() {
            for ch in 0..3 {
                color.set(ch, y, x, c[ch]);
            }
        }
    }
    TraceOutput { color, paths }
}

/// Converged estimate with `spp` stratified paths per pixel.
pub fn render_reference(scene: &Scene, frame_index: usize, spp: u32, seed: u64) -> Result<Tensor> {
    if spp == 0 {
        return Err(Error::Invalid("reference spp must be at least 1".into()));
    }
    Ok(trace_color(scene, frame_index, SamplingMode::Full { spp }, seed).color)
}

/// First surface that is not transparent along a primary ray, with the accumulated tint
/// of transparent surfaces crossed on the way (`None` if none were crossed).
fn first_opaque_hit(fs: &FrameScene, ray: Ray) -> (Option<Hit>, Option<Vec3>, f64) {
    let mut tint: Option<Vec3> = None;
    let mut origin = ray.origin;
    let mut travelled = 0.0;
    for _ in 0..MAX_PASS_THROUGH {
        let r = Ray { origin, dir: ray.dir };
        let Some(hit) = fs.intersect(&r, f64::INFINITY) else { return (None, tint, f64::INFINITY) };
        travelled += hit.t;
        let m = fs.material(hit.primitive);
        if m.is_transparent() && !m.is_emissive() {
            tint = Some(tint.unwrap_or(Vec3::ONE).mul_elem(m.transparent));
            origin = hit.point;
            continue;
        }
        let hit = Hit { t: travelled, ..hit };
        return (Some(hit), tint, travelled);
    }
    (None, tint, f64::INFINITY)
}

fn shadow_visibility(fs: &FrameScene, hit: &Hit, seed: u64) -> Vec3 {
    let mut sum = Vec3::ZERO;
    let mut count = 0usize;
    let mut rng = PathRng::new(seed, hash(&[fs.frame.to_bits()]), 0, 0);
    for &light in &fs.lights {
        for i in 0..SHADOW_GRID * SHADOW_GRID {
            let (ju, jv) = rng.next_pair();
            let u = ((i % SHADOW_GRID) as f64 + ju) / SHADOW_GRID as f64;
            let v = ((i / SHADOW_GRID) as f64 + jv) / SHADOW_GRID as f64;
            let (lp, ln, _) = sample_light(fs, light, u, v);
            let wi = (lp - hit.point).normalized();
            if ln.dot(-wi) <= 0.0 {
                continue;
            }
            count += 1;
            if hit.normal.dot(wi) > 0.0 {
                sum += fs.transmittance(hit.point + hit.normal * RAY_EPS, lp);
            }
        }
    }
    if count == 0 {
        Vec3::ZERO
    } else {
        sum / count as f64
    }
}

/// GBuffer at pixel centres: the 15 feature channels.
pub fn render_gbuffer(scene: &Scene, frame_index: usize) -> Tensor {
    let fs = scene.at_frame(frame_index);
    let (w, h) = (scene.width, scene.height);
    let rows: Vec<Vec<[f32; feature::COUNT]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let mut f = [0.0f32; feature::COUNT];
                    let ray = fs.camera.ray(x as f64 + 0.5, y as f64 + 0.5);
                    let (hit, tint, _) = first_opaque_hit(&fs, ray);
                    let put3 = |f: &mut [f32; feature::COUNT], at: usize, v: Vec3| {
                        f[at] = v.x as f32;
                        f[at + 1] = v.y as f32;
                        f[at + 2] = v.z as f32;
                    };
                    put3(&mut f, feature::TRANSPARENT, tint.unwrap_or(Vec3::ZERO));
                    match hit {
                        None => {
                            put3(&mut f, feature::ALBEDO, Vec3::ONE);
                            put3(&mut f, feature::SHADOW, Vec3::ONE);
                            f[feature::DEPTH] = f32::INFINITY;
                        }
                        Some(hit) => {
                            let m = fs.material(hit.primitive);
                            put3(&mut f, feature::NORMAL, hit.normal);
                            f[feature::DEPTH] = fs.camera.view_depth(ray.at(hit.t)).max(0.0) as f32;
                            f[feature::METALLIC] = m.metallic as f32;
                            f[feature::ROUGHNESS] = m.roughness as f32;
                            if m.is_emissive() {
                                put3(&mut f, feature::ALBEDO, Vec3::ONE);
                                put3(&mut f, feature::SHADOW, Vec3::ONE);
                            } else {
                                put3(&mut f, feature::ALBEDO, m.albedo);
                                let pix_seed = hash(&[(y * w + x) as u64]);
                                put3(&mut f, feature::SHADOW, shadow_visibility(&fs, &hit, pix_seed));
                            }
                        }
                    }
                    f
                })
                .collect()
        })
        .collect();
    let mut out = Tensor::zeros(vec![feature::COUNT, h, w]);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, f) in row.into_iter().enumerate() {
            for (c, v) in f.into_iter().enumerate() {
                out.set(c, y, x, v);
            }
        }
    }
    out
}

/// Backward motion vectors for `frame_index` (zero at frame 0).
pub fn compute_motion(scene: &Scene, frame_index: usize) -> Tensor {
    let (w, h) = (scene.width, scene.height);
    if frame_index == 0 {
        return Tensor::zeros(vec![2, h, w]);
    }
    let fs = scene.at_frame(frame_index);
    let prev_offsets: Vec<Vec3> = scene.primitives.iter().map(|p| p.offset_at(frame_index as f64 - 1.0)).collect();
    let prev_cam = scene.camera_at(frame_index as f64 - 1.0);
    let rows: Vec<Vec<(f32, f32)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let ray = fs.camera.ray(x as f64 + 0.5, y as f64 + 0.5);
                    let (hit, _, _) = first_opaque_hit(&fs, ray);
                    // Project both ends with the same arithmetic so that nothing moving gives exactly zero.
                    let ends = match hit {
                        Some(hit) => {
                            let p = ray.at(hit.t);
                            let shift = prev_offsets[hit.primitive] - fs.offsets[hit.primitive];
                            let q = if shift == Vec3::ZERO { p } else { p + shift };
                            fs.camera.project(p).zip(prev_cam.project(q))
                        }
                        None => fs.camera.project_direction(ray.dir).zip(prev_cam.project_direction(ray.dir)),
                    };
                    ends.map_or((0.0, 0.0), |((px, py), (qx, qy))| ((qx - px) as f32, (qy - py) as f32))
                })
                .collect()
        })
        .collect();
    let mut out = Tensor::zeros(vec![2, h, w]);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (dx, dy)) in row.into_iter().enumerate() {
            out.set(0, y, x, dx);
            out.set(1, y, x, dy);
        }
    }
    out
}

/// Render one frame: sampled color, mask, GBuffer and motion, plus an optional reference.
pub fn render_frame(
    scene: &Scene,
    frame_index: usize,
    mode: SamplingMode,
    seed: u64,
    reference_spp: Option<u32>,
) -> Result<FrameBundle> {
    scene.validate()?;
    let (w, h) = (scene.width, scene.height);
    let mode = match mode {
        SamplingMode::Quarter { .. } => SamplingMode::quarter_for_frame(frame_index),
        full => full,
    };
    let traced = trace_color(scene, frame_index, mode, seed);
    let mask = match mode {
        SamplingMode::Quarter { .. } => quarter_mask(w, h, frame_index),
        SamplingMode::Full { .. } => Tensor::full(vec![1, h, w], 1.0),
    };
    let reference = match reference_spp {
        Some(spp) => Some(render_reference(scene, frame_index, spp, reference_seed(seed))?),
        None => None,
    };
    Ok(FrameBundle {
        frame_index,
        width: w,
        height: h,
        color: traced.color,
        mask,
        features: render_gbuffer(scene, frame_index),
        motion: compute_motion(scene, frame_index),
        reference,
        sampling_mode: mode,
        depth_scale: scene.depth_scale() as f32,
    })
}

/// Seed used for reference renders so they share no paths with the noisy input.
pub fn reference_seed(seed: u64) -> u64 {
    hash(&[seed, 0x7265_6665_7265_6e63])
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BenchReport {
    pub scene: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub quarter_ms: f64,
    pub full_ms: f64,
    pub ratio: f64,
    pub quarter_paths_per_frame: usize,
    pub full_paths_per_frame: usize,
}

/// Wall-clock mean of the sampling stage in quarter vs full(1) mode. Two warm-up frames are discarded.
pub fn bench_sampling(scene: &Scene, frames: usize, seed: u64) -> Result<BenchReport> {
    if frames < 10 {
        return Err(Error::Invalid(format!("bench needs at least 10 frames, got {frames}")));
    }
    const WARMUP: usize = 2;
    let mut quarter = 0.0;
    let mut full = 0.0;
    let (mut qp, mut fp) = (0, 0);
    for i in 0..frames + WARMUP {
        let f = i % scene.frames.max(1);
        let t = Instant::now();
        let q = trace_color(scene, f, SamplingMode::quarter_for_frame(f), seed);
        let tq = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let full_out = trace_color(scene, f, SamplingMode::Full { spp: 1 }, seed);
        let tf = t.elapsed().as_secs_f64();
        if i >= WARMUP {
            quarter += tq;
            full += tf;
        }
        qp = q.paths;
        fp = full_out.paths;
    }
    let quarter_ms = quarter * 1e3 / frames as f64;
    let full_ms = full * 1e3 / frames as f64;
    Ok(BenchReport {
        scene: scene.name.clone(),
        width: scene.width,
        height: scene.height,
        frames,
        quarter_ms,
        full_ms,
        ratio: full_ms / quarter_ms,
        quarter_paths_per_frame: qp,
        full_paths_per_frame: fp,
    })
}
