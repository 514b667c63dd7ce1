//! Deterministic CPU path tracer producing sparse color, masks, GBuffers and motion.

pub mod bsdf;
pub mod bundle;
pub mod math;
pub mod render;
pub mod rng;
pub mod scene;

pub use bundle::{feature, FrameBundle, SamplingMode};
pub use math::{Ray, Vec3};
pub use render::{
    bench_sampling, compute_motion, quarter_mask, render_frame, render_gbuffer, render_reference, sample_position,
    trace_color, BenchReport, TraceOutput,
};
pub use scene::{Camera, CameraKey, CameraTrack, Material, OffsetKey, Primitive, Scene, Shape};

pub const BUILTIN_SCENES: [&str; 2] = ["cornell-motion", "corridor"];

/// A scene shipped with the crate, at its default 256×128, 64-frame setting.
pub fn builtin(name: &str) -> Option<Scene> {
    match name {
        "cornell-motion" => Some(cornell_motion()),
        "corridor" => Some(corridor()),
        _ => None,
    }
}

/// Resolve a scene argument: a builtin name or a path to a scene JSON file.
pub fn load_scene(name_or_path: &str) -> crate::Result<Scene> {
    match builtin(name_or_path) {
        Some(s) => Ok(s),
        None => Scene::load(std::path::Path::new(name_or_path)),
    }
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn quad(origin: Vec3, u: Vec3, w: Vec3, material: usize) -> Primitive {
    Primitive { shape: Shape::Quad { origin, u, v: w }, material, keyframes: vec![] }
}

fn animated(shape: Shape, material: usize, keys: &[(f64, Vec3)]) -> Primitive {
    Primitive {
        shape,
        material,
        keyframes: keys.iter().map(|&(frame, offset)| OffsetKey { frame, offset }).collect(),
    }
}

fn cornell_motion() -> Scene {
    let materials = vec![
        Material::diffuse("white", v(0.73, 0.73, 0.73)),
        Material::diffuse("red", v(0.65, 0.05, 0.05)),
        Material::diffuse("green", v(0.12, 0.45, 0.15)),
        Material::emitter("light", v(12.0, 11.0, 9.0)),
        Material { metallic: 1.0, roughness: 0.35, ..Material::diffuse("gold", v(0.95, 0.75, 0.35)) },
        Material { transparent: v(0.55, 0.75, 0.9), ..Material::diffuse("glass", v(0.9, 0.9, 0.9)) },
        Material::diffuse("blue", v(0.2, 0.3, 0.7)),
    ];
    let primitives = vec![
        quad(v(-2.0, 0.0, -1.5), v(4.0, 0.0, 0.0), v(0.0, 0.0, 3.5), 0),
        quad(v(-2.0, 2.0, -1.5), v(4.0, 0.0, 0.0), v(0.0, 0.0, 3.5), 0),
        quad(v(-2.0, 0.0, -1.5), v(4.0, 0.0, 0.0), v(0.0, 2.0, 0.0), 0),
        quad(v(-2.0, 0.0, -1.5), v(0.0, 0.0, 3.5), v(0.0, 2.0, 0.0), 1),
        quad(v(2.0, 0.0, -1.5), v(0.0, 0.0, 3.5), v(0.0, 2.0, 0.0), 2),
        // facing down
        quad(v(-0.5, 1.99, -0.7), v(1.0, 0.0, 0.0), v(0.0, 0.0, 1.0), 3),
        Primitive { shape: Shape::Box { min: v(-1.3, 0.0, -1.0), max: v(-0.5, 1.1, -0.3) }, material: 0, keyframes: vec![] },
        animated(
            Shape::Sphere { center: v(0.0, 0.4, 0.0), radius: 0.4 },
            4,
            &[(0.0, v(-0.6, 0.0, 0.3)), (32.0, v(0.9, 0.0, -0.2)), (63.0, v(-0.2, 0.0, 0.6))],
        ),
        animated(
            Shape::Sphere { center: v(1.0, 0.25, 0.8), radius: 0.25 },
            6,
            &[(0.0, v(0.0, 0.0, 0.0)), (63.0, v(-0.6, 0.9, 0.0))],
        ),
        quad(v(0.4, 0.0, 0.3), v(0.0, 0.0, 0.9), v(0.0, 1.2, 0.0), 5),
    ];
    Scene {
        name: "cornell-motion".into(),
        width: 256,
        height: 128,
        frames: 64,
        environment: Vec3::ZERO,
        camera: CameraTrack {
            vfov_deg: 42.0,
            keyframes: vec![
                CameraKey { frame: 0.0, position: v(-0.5, 1.0, 4.2), look_at: v(0.0, 0.9, 0.0), up: v(0.0, 1.0, 0.0) },
                CameraKey { frame: 63.0, position: v(0.6, 1.2, 3.8), look_at: v(0.1, 0.8, 0.0), up: v(0.0, 1.0, 0.0) },
            ],
        },
        materials,
        primitives,
    }
}

fn corridor() -> Scene {
    let materials = vec![
        Material::diffuse("floor", v(0.55, 0.5, 0.45)),
        Material::diffuse("wall", v(0.7, 0.68, 0.62)),
        Material::emitter("lamp", v(8.0, 8.0, 7.0)),
        Material { metallic: 1.0, roughness: 0.2, ..Material::diffuse("steel", v(0.8, 0.8, 0.85)) },
        Material::diffuse("crate", v(0.6, 0.35, 0.15)),
        Material { transparent: v(0.8, 0.6, 0.5), ..Material::diffuse("tinted", v(0.9, 0.9, 0.9)) },
        Material { metallic: 0.5, roughness: 0.5, ..Material::diffuse("pillar", v(0.3, 0.5, 0.6)) },
    ];
    let len = 24.0;
    let mut primitives = vec![
        quad(v(-1.5, 0.0, 2.0), v(3.0, 0.0, 0.0), v(0.0, 0.0, -len), 0),
        quad(v(-1.5, 2.5, 2.0), v(3.0, 0.0, 0.0), v(0.0, 0.0, -len), 1),
        quad(v(-1.5, 0.0, 2.0), v(0.0, 0.0, -len), v(0.0, 2.5, 0.0), 1),
        quad(v(1.5, 0.0, 2.0), v(0.0, 0.0, -len), v(0.0, 2.5, 0.0), 1),
    ];
    for i in 0..6 {
        let z = -1.0 - 3.5 * i as f64;
        // u × v points down
        primitives.push(quad(v(-0.4, 2.49, z), v(0.8, 0.0, 0.0), v(0.0, 0.0, 0.6), 2));
    }
    primitives.push(Primitive { shape: Shape::Box { min: v(0.6, 0.0, -5.0), max: v(1.4, 0.8, -4.0) }, material: 4, keyframes: vec![] });
    primitives.push(Primitive { shape: Shape::Box { min: v(-1.4, 0.0, -11.0), max: v(-0.9, 2.5, -10.5) }, material: 6, keyframes: vec![] });
    primitives.push(animated(
        Shape::Sphere { center: v(0.0, 0.5, -7.0), radius: 0.5 },
        3,
        &[(0.0, v(-0.8, 0.0, 0.0)), (63.0, v(0.8, 0.0, 1.0))],
    ));
    primitives.push(quad(v(-1.5, 0.0, -14.0), v(1.6, 0.0, 0.0), v(0.0, 2.5, 0.0), 5));
    Scene {
        name: "corridor".into(),
        width: 256,
        height: 128,
        frames: 64,
        environment: v(0.25, 0.3, 0.4),
        camera: CameraTrack {
            vfov_deg: 55.0,
            keyframes: vec![
                CameraKey { frame: 0.0, position: v(0.3, 1.3, 1.5), look_at: v(-0.2, 1.1, -8.0), up: v(0.0, 1.0, 0.0) },
                CameraKey { frame: 63.0, position: v(-0.2, 1.4, -3.0), look_at: v(0.3, 1.0, -12.0), up: v(0.0, 1.0, 0.0) },
            ],
        },
        materials,
        primitives,
    }
}
