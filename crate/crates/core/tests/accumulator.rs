use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssr_core::accumulator::{
    accumulate_step, accumulate_step_with, compute_blend, AccumulatorState, AlphaOverride, StepInputs, ACCUMULATED,
    FEATURES,
};
use ssr_core::model::{init_model, Ablation};
use ssr_core::params::{Bound, ModelParams};
use ssr_core::reprojection::warp_taps;
use ssr_core::tensor::{Graph, Tensor, Var, WarpTaps};

fn image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(vec![c, h, w], |_| rng.gen_range(lo..hi))
}

fn params(seed: u64) -> ModelParams {
    init_model(Ablation::default(), seed)
}

struct Frame {
    features: Tensor,
    mask: Tensor,
    irradiance: Tensor,
    taps: Arc<WarpTaps>,
}

fn frame(rng: &mut ChaCha8Rng, h: usize, w: usize, shift: f32) -> Frame {
    let motion = Tensor::from_fn(vec![2, h, w], |i| if i < h * w { shift } else { 0.0 });
    Frame {
        features: image(rng, FEATURES, h, w, 0.0, 1.0),
        mask: Tensor::from_fn(vec![1, h, w], |i| if i % 4 == 0 { 1.0 } else { 0.0 }),
        irradiance: image(rng, 3, h, w, 0.0, 2.0),
        taps: warp_taps(&motion).unwrap(),
    }
}

fn inputs(g: &mut Graph<f32>, f: &Frame, index: usize) -> StepInputs {
    StepInputs {
        frame_index: index,
        features: g.constant(f.features.clone()).unwrap(),
        mask: g.constant(f.mask.clone()).unwrap(),
        irradiance: g.constant(f.irradiance.clone()).unwrap(),
        taps: f.taps.clone(),
        validity: g.constant(f.taps.validity()).unwrap(),
    }
}

fn history(g: &mut Graph<f32>, rng: &mut ChaCha8Rng, h: usize, w: usize) -> (AccumulatorState, Tensor, Tensor) {
    let irr = image(rng, 3, h, w, 0.0, 2.0);
    let feats = image(rng, ACCUMULATED, h, w, 0.0, 1.0);
    let state = AccumulatorState {
        irradiance: g.constant(irr.clone()).unwrap(),
        features: g.constant(feats.clone()).unwrap(),
        frame_index: 0,
    };
    (state, irr, feats)
}

fn value(g: &Graph<f32>, v: Var) -> Tensor {
    g.value(v).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn blend_weights_sum_to_one_and_stay_convex(seed in 0u64..1000, h in 1usize..9, w in 1usize..9, shift in -2.0f32..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = params(seed);
        let mut g = Graph::<f32>::new();
        let b = Bound::new(&mut g, &p).unwrap();
        let (state, hist_irr, _) = history(&mut g, &mut rng, h, w);
        let f = frame(&mut rng, h, w, shift);
        let inp = inputs(&mut g, &f, 1);
        let (next, blend) = accumulate_step(&mut g, &b, Some(&state), &inp).unwrap();
        let (alpha, beta) = (value(&g, blend.alpha), value(&g, blend.beta));
        for (a, b) in alpha.data().iter().zip(beta.data()) {
            prop_assert!((a + b - 1.0).abs() <= 1e-6);
            prop_assert!((0.0..=1.0).contains(a));
        }
        let warped = f.taps.warp_image(&hist_irr).unwrap();
        let out = value(&g, next.irradiance);
        for i in 0..out.len() {
            let (x, y) = (warped.data()[i], f.irradiance.data()[i]);
            let v = out.data()[i];
            prop_assert!(v >= x.min(y) - 1e-6 && v <= x.max(y) + 1e-6, "{} outside [{}, {}]", v, x, y);
        }
    }
}

#[test]
fn forced_alpha_gives_exact_endpoints() {
    let (h, w) = (6, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = params(3);
    let f = frame(&mut rng, h, w, 1.0);
    for a in [0.0, 1.0] {
        let mut g = Graph::<f32>::new();
        let b = Bound::new(&mut g, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (state, hist_irr, hist_feats) = history(&mut g, &mut rng, h, w);
        let inp = inputs(&mut g, &f, 1);
        let (next, _) = accumulate_step_with(&mut g, &b, Some(&state), &inp, AlphaOverride::Fixed(a)).unwrap();
        let irr = value(&g, next.irradiance);
        let feats = value(&g, next.features);
        if a == 0.0 {
            assert_eq!(irr, f.irradiance);
            let cur = Tensor::concat(&[&f.features.channel_slice(0, 9).unwrap(), &f.features.channel_slice(12, 3).unwrap()])
                .unwrap();
            assert_eq!(feats, cur);
        } else {
            assert_eq!(irr, f.taps.warp_image(&hist_irr).unwrap());
            assert_eq!(feats, f.taps.warp_image(&hist_feats).unwrap());
        }
    }
}

#[test]
fn first_frame_copies_current_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = params(9);
    let f = frame(&mut rng, 8, 8, 0.5);
    let mut g = Graph::<f32>::new();
    let b = Bound::new(&mut g, &p).unwrap();
    let inp = inputs(&mut g, &f, 0);
    let (state, _) = accumulate_step(&mut g, &b, None, &inp).unwrap();
    assert_eq!(value(&g, state.irradiance), f.irradiance);
    assert_eq!(value(&g, state.features).channel_slice(0, 9).unwrap(), f.features.channel_slice(0, 9).unwrap());
    assert_eq!(value(&g, state.features).channel_slice(9, 3).unwrap(), f.features.channel_slice(12, 3).unwrap());
    assert_eq!(state.frame_index, 0);
}

#[test]
fn single_pixel_softmax_oracle() {
    let mut g = Graph::<f32>::new();
    let reference = g.constant(Tensor::new(vec![2, 1, 1], vec![1.0, 0.0]).unwrap()).unwrap();
    let cur = g.constant(Tensor::new(vec![2, 1, 1], vec![1.0, 5.0]).unwrap()).unwrap();
    let prev = g.constant(Tensor::new(vec![2, 1, 1], vec![0.0, -3.0]).unwrap()).unwrap();
    let b = compute_blend(&mut g, reference, cur, prev).unwrap();
    let e = std::f64::consts::E;
    let beta = e / (e + 1.0);
    assert!((g.value(b.beta).item() as f64 - beta).abs() < 1e-6);
    assert!((g.value(b.alpha).item() as f64 - (1.0 - beta)).abs() < 1e-6);
}

#[test]
fn skipped_frame_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = params(1);
    let mut g = Graph::<f32>::new();
    let b = Bound::new(&mut g, &p).unwrap();
    let (state, _, _) = history(&mut g, &mut rng, 4, 4);
    let f = frame(&mut rng, 4, 4, 0.0);
    let inp = inputs(&mut g, &f, 2);
    assert!(accumulate_step(&mut g, &b, Some(&state), &inp).is_err());
}

fn variance(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

#[test]
fn accumulation_reduces_variance_on_a_static_scene() {
    let (h, w) = (16, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = params(21);
    let features = image(&mut rng, FEATURES, h, w, 0.2, 0.8);
    let taps = warp_taps(&Tensor::zeros(vec![2, h, w])).unwrap();
    let mut carried: Option<(Tensor, Tensor)> = None;
    let mut single = 0.0;
    for t in 0..16 {
        let irradiance = Tensor::from_fn(vec![3, h, w], |_| 0.5 + rng.gen_range(-0.3f32..0.3));
        if t == 0 {
            single = variance(irradiance.data().iter().map(|&v| v as f64));
        }
        let mut g = Graph::<f32>::new();
        let b = Bound::new(&mut g, &p).unwrap();
        let f = Frame { features: features.clone(), mask: Tensor::full(vec![1, h, w], 1.0), irradiance, taps: taps.clone() };
        let inp = inputs(&mut g, &f, t);
        let state = carried.as_ref().map(|(irr, feats)| AccumulatorState {
            irradiance: g.constant(irr.clone()).unwrap(),
            features: g.constant(feats.clone()).unwrap(),
            frame_index: t - 1,
        });
        let (next, _) = accumulate_step(&mut g, &b, state.as_ref(), &inp).unwrap();
        carried = Some((value(&g, next.irradiance), value(&g, next.features)));
    }
    let acc = variance(carried.unwrap().0.data().iter().map(|&v| v as f64));
    assert!(acc < single, "accumulated variance {acc} vs single-frame {single}");
}
