use std::f64::consts::PI;

use ssr_core::pathtracer::render::render_gbuffer;
use ssr_core::pathtracer::*;

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn static_camera(position: Vec3, look_at: Vec3, vfov_deg: f64) -> CameraTrack {
    CameraTrack { vfov_deg, keyframes: vec![CameraKey { frame: 0.0, position, look_at, up: v(0.0, 1.0, 0.0) }] }
}

fn furnace_scene(albedo: f64) -> Scene {
    Scene {
        name: "furnace".into(),
        width: 32,
        height: 32,
        frames: 1,
        environment: Vec3::ONE,
        camera: static_camera(v(0.0, 0.0, 3.0), Vec3::ZERO, 40.0),
        materials: vec![Material::diffuse("white", Vec3::splat(albedo))],
        primitives: vec![Primitive {
            shape: Shape::Sphere { center: Vec3::ZERO, radius: 1.0 },
            material: 0,
            keyframes: vec![],
        }],
    }
}

/// Floor at y = 0 lit by a downward-facing square lamp.
fn lamp_scene(width: usize, height: usize) -> (Scene, [Vec3; 4], f64, f64) {
    let corners = [v(-0.25, 1.0, -0.25), v(0.25, 1.0, -0.25), v(0.25, 1.0, 0.25), v(-0.25, 1.0, 0.25)];
    let radiance = 3.0;
    let albedo = 0.6;
    let scene = Scene {
        name: "lamp".into(),
        width,
        height,
        frames: 1,
        environment: Vec3::ZERO,
        camera: static_camera(v(0.0, 0.7, 2.0), v(0.0, 0.0, 0.0), 30.0),
        materials: vec![Material::diffuse("floor", Vec3::splat(albedo)), Material::emitter("lamp", Vec3::splat(radiance))],
        primitives: vec![
            Primitive {
                shape: Shape::Quad { origin: v(-4.0, 0.0, -4.0), u: v(8.0, 0.0, 0.0), v: v(0.0, 0.0, 8.0) },
                material: 0,
                keyframes: vec![],
            },
            Primitive {
                shape: Shape::Quad { origin: corners[0], u: v(0.5, 0.0, 0.0), v: v(0.0, 0.0, 0.5) },
                material: 1,
                keyframes: vec![],
            },
        ],
    };
    (scene, corners, radiance, albedo)
}

/// Irradiance at `x` (normal `n`) from a uniform Lambertian polygon, by the closed-form contour integral.
fn polygon_irradiance(x: Vec3, n: Vec3, corners: &[Vec3], radiance: f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..corners.len() {
        let a = (corners[i] - x).normalized();
        let b = (corners[(i + 1) % corners.len()] - x).normalized();
        let theta = a.dot(b).clamp(-1.0, 1.0).acos();
        sum += theta * n.dot(a.cross(b).normalized());
    }
    radiance * 0.5 * sum.abs()
}

fn mean_rgb(img: &ssr_core::tensor::Tensor) -> f64 {
    img.data().iter().map(|&x| x as f64).sum::<f64>() / img.len() as f64
}

#[test]
fn furnace_test_is_energy_neutral() {
    let scene = furnace_scene(1.0);
    let img = render_reference(&scene, 0, 4096, 3).unwrap();
    let mean = mean_rgb(&img);
    assert!((mean - 1.0).abs() <= 0.02, "furnace mean {mean}");
}

#[test]
fn furnace_with_grey_sphere_returns_albedo() {
    let scene = furnace_scene(0.5);
    let g = render_gbuffer(&scene, 0);
    let img = render_reference(&scene, 0, 256, 3).unwrap();
    // On the sphere one bounce always escapes to the environment: radiance = albedo exactly.
    for y in 0..32 {
        for x in 0..32 {
            let centre_hit = g.at(feature::DEPTH, y, x).is_finite();
            let val = img.at(0, y, x);
            if centre_hit && x > 2 && y > 2 && x < 29 && y < 29 {
                let neighbours_hit = (0..9).all(|k| g.at(feature::DEPTH, y + k / 3 - 1, x + k % 3 - 1).is_finite());
                if neighbours_hit {
                    assert!((val - 0.5).abs() < 1e-5, "({x},{y}) {val}");
                }
            }
        }
    }
}

#[test]
fn area_light_matches_closed_form_irradiance() {
    let (scene, corners, radiance, albedo) = lamp_scene(64, 64);
    let img = render_reference(&scene, 0, 4096, 11).unwrap();
    let cam = scene.camera_at(0.0);
    let fs = scene.at_frame(0);
    for (px, py) in [(32, 40), (20, 50), (45, 30)] {
        let ray = cam.ray(px as f64 + 0.5, py as f64 + 0.5);
        let hit = fs.intersect(&ray, f64::INFINITY).expect("probe hits the floor");
        assert_eq!(hit.primitive, 0);
        let expected = albedo / PI * polygon_irradiance(hit.point, v(0.0, 1.0, 0.0), &corners, radiance);
        let got = img.at(0, py, px) as f64;
        let rel = (got - expected).abs() / expected;
        assert!(rel < 0.02, "probe ({px},{py}): traced {got}, closed form {expected}, rel {rel}");
    }
}

#[test]
fn emissive_only_scene_returns_emission_exactly() {
    let emission = v(0.3, 1.7, 2.25);
    let scene = Scene {
        name: "glow".into(),
        width: 8,
        height: 8,
        frames: 4,
        environment: Vec3::ZERO,
        camera: static_camera(v(0.0, 0.0, 1.0), Vec3::ZERO, 40.0),
        materials: vec![Material::emitter("wall", emission)],
        primitives: vec![Primitive {
            shape: Shape::Quad { origin: v(-5.0, -5.0, 0.0), u: v(10.0, 0.0, 0.0), v: v(0.0, 10.0, 0.0) },
            material: 0,
            keyframes: vec![],
        }],
    };
    let want = [emission.x as f32, emission.y as f32, emission.z as f32];
    for frame in 0..4 {
        let b = render_frame(&scene, frame, SamplingMode::Quarter { phase: 0 }, 1, Some(7)).unwrap();
        let reference = b.reference.as_ref().unwrap();
        for y in 0..8 {
            for x in 0..8 {
                for c in 0..3 {
                    let sampled = b.mask.at(0, y, x) == 1.0;
                    assert_eq!(b.color.at(c, y, x), if sampled { want[c] } else { 0.0 });
                    assert_eq!(reference.at(c, y, x), want[c]);
                }
            }
        }
    }
}

#[test]
fn sample_positions_cover_each_tile() {
    for tile in [(0, 0), (3, 7), (100, 1)] {
        let mut seen: Vec<_> = (0..4).map(|f| sample_position(tile, f)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        for &(x, y) in &seen {
            assert_eq!((x / 2, y / 2), tile);
        }
    }
    let (x, y) = sample_position((9, 9), 1);
    assert_eq!(sample_position((0, 0), 5), (x - 18, y - 18));
}

#[test]
fn quarter_mask_is_one_pixel_per_tile_and_covers_in_four_frames() {
    let (w, h) = (256, 128);
    for start in [0, 1, 5] {
        let mut count = vec![0u8; w * h];
        for f in start..start + 4 {
            let m = quarter_mask(w, h, f);
            let ones = m.data().iter().filter(|&&x| x == 1.0).count();
            assert_eq!(ones * 4, w * h);
            assert!(m.data().iter().all(|&x| x == 0.0 || x == 1.0));
            for ty in 0..h / 2 {
                for tx in 0..w / 2 {
                    let s: f32 = (0..4).map(|k| m.at(0, 2 * ty + k / 2, 2 * tx + k % 2)).sum();
                    assert_eq!(s, 1.0);
                }
            }
            for (i, &x) in m.data().iter().enumerate() {
                count[i] += x as u8;
            }
        }
        assert!(count.iter().all(|&c| c == 1));
    }
}

#[test]
fn quarter_color_is_zero_off_mask_and_paths_are_counted() {
    let scene = builtin("cornell-motion").unwrap().with_resolution(32, 16);
    for frame in 0..4 {
        let b = render_frame(&scene, frame, SamplingMode::Quarter { phase: 0 }, 5, None).unwrap();
        assert_eq!(b.sampling_mode, SamplingMode::quarter_for_frame(frame));
        for y in 0..16 {
            for x in 0..32 {
                if b.mask.at(0, y, x) == 0.0 {
                    assert_eq!([b.color.at(0, y, x), b.color.at(1, y, x), b.color.at(2, y, x)], [0.0; 3]);
                }
            }
        }
    }
    let q = trace_color(&scene, 2, SamplingMode::quarter_for_frame(2), 0);
    let f = trace_color(&scene, 2, SamplingMode::Full { spp: 1 }, 0);
    assert_eq!(q.paths, 32 * 16 / 4);
    assert_eq!(f.paths, 32 * 16);
}

#[test]
fn quarter_samples_match_full_one_spp() {
    let scene = builtin("corridor").unwrap().with_resolution(32, 16);
    let q = trace_color(&scene, 6, SamplingMode::quarter_for_frame(6), 9).color;
    let f = trace_color(&scene, 6, SamplingMode::Full { spp: 1 }, 9).color;
    let r = render_reference(&scene, 6, 1, 9).unwrap();
    assert_eq!(f, r);
    let mask = quarter_mask(32, 16, 6);
    for y in 0..16 {
        for x in 0..32 {
            if mask.at(0, y, x) == 1.0 {
                for c in 0..3 {
                    assert_eq!(q.at(c, y, x), f.at(c, y, x));
                }
            }
        }
    }
}

#[test]
fn gbuffer_invariants_hold_on_builtin_scenes() {
    for name in BUILTIN_SCENES {
        let scene = builtin(name).unwrap().with_resolution(64, 32);
        for frame in [0, 17, 63] {
            let g = render_gbuffer(&scene, frame);
            for y in 0..32 {
                for x in 0..64 {
                    let depth = g.at(feature::DEPTH, y, x);
                    assert!(depth >= 0.0);
                    if depth.is_finite() {
                        let n: f32 = (0..3).map(|c| g.at(feature::NORMAL + c, y, x).powi(2)).sum();
                        assert!((n.sqrt() - 1.0).abs() < 1e-5);
                    }
                    for c in 0..3 {
                        let s = g.at(feature::SHADOW + c, y, x);
                        assert!((0.0..=1.0).contains(&s));
                    }
                }
            }
        }
    }
}

#[test]
fn shadow_is_one_on_an_unoccluded_plane() {
    let (scene, ..) = lamp_scene(16, 16);
    let g = render_gbuffer(&scene, 0);
    for y in 0..16 {
        for x in 0..16 {
            if g.at(feature::DEPTH, y, x).is_finite() && g.at(feature::ALBEDO, y, x) < 1.0 {
                for c in 0..3 {
                    assert_eq!(g.at(feature::SHADOW + c, y, x), 1.0);
                }
            }
        }
    }
}

#[test]
fn transparent_buffer_records_tint_in_front_of_opaque_hit() {
    let tint = v(0.5, 0.8, 0.25);
    let scene = Scene {
        name: "pane".into(),
        width: 8,
        height: 8,
        frames: 1,
        environment: Vec3::ONE,
        camera: static_camera(v(0.0, 0.0, 2.0), Vec3::ZERO, 20.0),
        materials: vec![
            Material::diffuse("wall", v(0.2, 0.4, 0.6)),
            Material { transparent: tint, ..Material::diffuse("pane", Vec3::ONE) },
        ],
        primitives: vec![
            Primitive {
                shape: Shape::Quad { origin: v(-5.0, -5.0, -1.0), u: v(10.0, 0.0, 0.0), v: v(0.0, 10.0, 0.0) },
                material: 0,
                keyframes: vec![],
            },
            Primitive {
                shape: Shape::Quad { origin: v(0.0, -5.0, 0.0), u: v(5.0, 0.0, 0.0), v: v(0.0, 10.0, 0.0) },
                material: 1,
                keyframes: vec![],
            },
        ],
    };
    let g = render_gbuffer(&scene, 0);
    for x in 0..8 {
        let behind_pane = x >= 4;
        let want = if behind_pane { [0.5, 0.8, 0.25] } else { [0.0; 3] };
        for (c, &w) in want.iter().enumerate() {
            assert_eq!(g.at(feature::TRANSPARENT + c, 3, x), w);
            assert_eq!(g.at(feature::ALBEDO + c, 3, x), [0.2f32, 0.4, 0.6][c]);
        }
        assert!((g.at(feature::DEPTH, 3, x) - 3.0).abs() < 0.1);
    }
}

#[test]
fn static_scene_has_zero_motion() {
    let (scene, ..) = lamp_scene(32, 32);
    let m = compute_motion(&scene, 3);
    assert!(m.data().iter().all(|&x| x == 0.0));
    assert!(compute_motion(&builtin("corridor").unwrap().with_resolution(16, 8), 0).data().iter().all(|&x| x == 0.0));
}

#[test]
fn one_pixel_camera_pan_gives_unit_motion_on_a_wall() {
    let (w, h) = (64, 32);
    let vfov: f64 = 40.0;
    let dist = 5.0;
    // World width of one pixel at the wall's distance.
    let pixel = 2.0 * dist * (vfov.to_radians() / 2.0).tan() / h as f64;
    let key = |frame: f64, x: f64| CameraKey { frame, position: v(x, 0.0, dist), look_at: v(x, 0.0, 0.0), up: v(0.0, 1.0, 0.0) };
    let scene = Scene {
        name: "pan".into(),
        width: w,
        height: h,
        frames: 2,
        environment: Vec3::ONE,
        camera: CameraTrack { vfov_deg: vfov, keyframes: vec![key(0.0, 0.0), key(1.0, pixel)] },
        materials: vec![Material::diffuse("wall", Vec3::splat(0.5))],
        primitives: vec![Primitive {
            shape: Shape::Quad { origin: v(-50.0, -50.0, 0.0), u: v(100.0, 0.0, 0.0), v: v(0.0, 100.0, 0.0) },
            material: 0,
            keyframes: vec![],
        }],
    };
    let m = compute_motion(&scene, 1);
    for y in 0..h {
        for x in 0..w {
            assert!((m.at(0, y, x) - 1.0).abs() < 0.05, "{}", m.at(0, y, x));
            assert!(m.at(1, y, x).abs() < 0.05);
        }
    }
}

#[test]
fn moving_object_with_static_camera_moves_only_its_pixels() {
    let mut scene = lamp_scene(32, 32).0;
    scene.materials.push(Material::diffuse("ball", Vec3::splat(0.3)));
    scene.primitives.push(Primitive {
        shape: Shape::Sphere { center: v(0.0, 0.2, 0.0), radius: 0.2 },
        material: 2,
        keyframes: vec![OffsetKey { frame: 0.0, offset: Vec3::ZERO }, OffsetKey { frame: 4.0, offset: v(0.4, 0.0, 0.0) }],
    });
    let g = render_gbuffer(&scene, 2);
    let m = compute_motion(&scene, 2);
    let mut moving = 0;
    for y in 0..32 {
        for x in 0..32 {
            let on_ball = g.at(feature::ALBEDO, y, x) == 0.3;
            let mv = m.at(0, y, x).abs() + m.at(1, y, x).abs();
            if on_ball {
                assert!(m.at(0, y, x) < -0.5, "ball moves right so it was further left");
                moving += 1;
            } else {
                assert_eq!(mv, 0.0);
            }
        }
    }
    assert!(moving > 0);
}

#[test]
fn rendering_is_deterministic_across_thread_counts() {
    // Direct light, a soft shadow and one bounce of indirect light; no glossy caustics, whose
    // heavy-tailed noise would make a 20-seed variance estimate unreliable.
    let mut scene = lamp_scene(32, 32).0;
    scene.materials.push(Material::diffuse("block", v(0.8, 0.5, 0.3)));
    scene.primitives.push(Primitive {
        shape: Shape::Box { min: v(-0.4, 0.0, -0.2), max: v(0.0, 0.5, 0.2) },
        material: 2,
        keyframes: vec![],
    });
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| render_frame(&scene, 9, SamplingMode::Quarter { phase: 0 }, 42, Some(4)).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    let c = render_frame(&scene, 9, SamplingMode::Quarter { phase: 0 }, 43, None).unwrap();
    assert_ne!(a.color, c.color);
}

#[test]
fn doubling_spp_halves_variance() {
    // Direct light, a soft shadow and one bounce of indirect light; no glossy caustics, whose
    // heavy-tailed noise would make a 20-seed variance estimate unreliable.
    let mut scene = lamp_scene(32, 32).0;
    scene.materials.push(Material::diffuse("block", v(0.8, 0.5, 0.3)));
    scene.primitives.push(Primitive {
        shape: Shape::Box { min: v(-0.4, 0.0, -0.2), max: v(0.0, 0.5, 0.2) },
        material: 2,
        keyframes: vec![],
    });
    let variance = |spp: u32| {
        let imgs: Vec<_> = (0..20).map(|s| render_reference(&scene, 0, spp, 1000 + s).unwrap()).collect();
        let n = imgs.len() as f64;
        let mut total = 0.0;
        for i in 0..imgs[0].len() {
            let vals: Vec<f64> = imgs.iter().map(|im| im.data()[i] as f64).collect();
            let mean = vals.iter().sum::<f64>() / n;
            total += vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        }
        total / imgs[0].len() as f64
    };
    let ratio = variance(1) / variance(2);
    assert!((ratio - 2.0).abs() <= 0.3, "variance ratio {ratio}");
}

#[test]
fn scene_json_round_trips_and_validates() {
    for name in BUILTIN_SCENES {
        let s = builtin(name).unwrap();
        s.validate().unwrap();
        assert_eq!(Scene::from_json(&s.to_json()).unwrap(), s);
    }
    let mut bad = builtin("cornell-motion").unwrap();
    bad.materials[0].albedo = v(1.5, 0.0, 0.0);
    assert!(bad.validate().is_err());
    let mut dark = furnace_scene(1.0);
    dark.environment = Vec3::ZERO;
    assert!(dark.validate().is_err());
    assert!(furnace_scene(1.0).with_resolution(31, 32).validate().is_err());
}

#[test]
fn bench_counts_paths_and_rejects_short_runs() {
    let scene = builtin("corridor").unwrap().with_resolution(16, 8);
    assert!(bench_sampling(&scene, 3, 0).is_err());
    let r = bench_sampling(&scene, 10, 0).unwrap();
    assert_eq!(r.quarter_paths_per_frame, 32);
    assert_eq!(r.full_paths_per_frame, 128);
    assert!(r.quarter_ms > 0.0 && r.full_ms > 0.0);
}
