use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssr_core::tensor::{grad_check, Graph, Real, Tensor, Var};
use ssr_core::error::TensorError;

fn random<T: Real>(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| T::from_f64(rng.gen_range(lo..hi)))
}

/// Magnitudes evenly spaced over [0.1, 1] in random order with random signs, so
/// finite-difference steps never cross a relu kink or a max-pool tie.
fn kink_free<T: Real>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let mut levels: Vec<f64> = (0..n).map(|i| 0.1 + 0.9 * i as f64 / n as f64).collect();
    for i in (1..n).rev() {
        levels.swap(i, rng.gen_range(0..=i));
    }
    Tensor::from_fn(shape.to_vec(), |i| T::from_f64(if rng.gen_bool(0.5) { levels[i] } else { -levels[i] }))
}

/// Direct 3×3 zero-padded correlation, written independently of the im2col path.
fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (c, h, wd) = x.chw().unwrap();
    let o = w.shape()[0];
    let mut out = Tensor::zeros(vec![o, h, wd]);
    for oc in 0..o {
        for y in 0..h as i64 {
            for xx in 0..wd as i64 {
                let mut acc = b.data()[oc];
                for ic in 0..c {
                    for ky in 0..3i64 {
                        for kx in 0..3i64 {
                            let (sy, sx) = (y + ky - 1, xx + kx - 1);
                            if sy >= 0 && sy < h as i64 && sx >= 0 && sx < wd as i64 {
                                let wi = ((oc * c + ic) * 3 + ky as usize) * 3 + kx as usize;
                                acc += w.data()[wi] * x.at(ic, sy as usize, sx as usize);
                            }
                        }
                    }
                }
                out.set(oc, y as usize, xx as usize, acc);
            }
        }
    }
    out
}

/// Weighted sum with a fixed random pattern so gradients are not all equal.
fn weighted_sum<T: Real>(g: &mut Graph<T>, v: Var, seed: u64) -> Result<Var, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(v).to_vec();
    let w = random::<T>(&shape, &mut rng, -1.0, 1.0);
    let m = g.mul_const(v, &w)?;
    g.sum(m)
}

#[test]
fn conv_identity_kernel() {
    let x = Tensor::<f32>::new(vec![1, 3, 3], (1..=9).map(|v| v as f32).collect()).unwrap();
    let mut k = vec![0.0f32; 9];
    k[4] = 1.0;
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let wv = g.constant(Tensor::new(vec![1, 1, 3, 3], k).unwrap()).unwrap();
    let bv = g.constant(Tensor::zeros(vec![1])).unwrap();
    let y = g.conv2d(xv, wv, bv).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn conv_zero_input_gives_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::new();
    let xv = g.constant(Tensor::<f32>::zeros(vec![2, 5, 4])).unwrap();
    let wv = g.constant(random(&[3, 2, 3, 3], &mut rng, -1.0, 1.0)).unwrap();
    let bv = g.constant(Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap()).unwrap();
    let y = g.conv2d(xv, wv, bv).unwrap();
    for c in 0..3 {
        for &v in &g.value(y).data()[c * 20..(c + 1) * 20] {
            assert_eq!(v, [0.5, -1.0, 2.0][c]);
        }
    }
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Tensor<f64> = random(&[2, 4, 4], &mut rng, -1.0, 1.0);
    let w: Tensor<f64> = random(&[3, 2, 3, 3], &mut rng, -1.0, 1.0);
    let b: Tensor<f64> = random(&[3], &mut rng, -1.0, 1.0);
    let expected = conv_oracle(&x, &w, &b);
    let mut g = Graph::<f32>::new();
    let (xv, wv, bv) = (g.constant(x.cast()).unwrap(), g.constant(w.cast()).unwrap(), g.constant(b.cast()).unwrap());
    let y = g.conv2d(xv, wv, bv).unwrap();
    for (a, e) in g.value(y).data().iter().zip(expected.data()) {
        assert!((*a as f64 - e).abs() < 1e-5, "{a} vs {e}");
    }
}

#[test]
fn conv_rejects_channel_mismatch() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(vec![2, 4, 4])).unwrap();
    let w = g.constant(Tensor::zeros(vec![1, 3, 3, 3])).unwrap();
    let b = g.constant(Tensor::zeros(vec![1])).unwrap();
    let err = g.conv2d(x, w, b).unwrap_err();
    assert!(matches!(err, TensorError::Shape { op: "conv2d", .. }), "{err}");
}

#[test]
fn maxpool_cases() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    let y = g.maxpool2(x).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);

    let c = g.constant(Tensor::full(vec![2, 4, 6], 0.7)).unwrap();
    let y = g.maxpool2(c).unwrap();
    assert_eq!(g.value(y), &Tensor::full(vec![2, 2, 3], 0.7));

    let odd = g.constant(Tensor::zeros(vec![1, 3, 4])).unwrap();
    assert!(g.maxpool2(odd).is_err());
}

#[test]
fn maxpool_matches_window_max_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Tensor<f32> = random(&[3, 8, 8], &mut rng, -5.0, 5.0);
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let y = g.maxpool2(xv).unwrap();
    for c in 0..3 {
        for oy in 0..4 {
            for ox in 0..4 {
                let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(dy, dx)| x.at(c, 2 * oy + dy, 2 * ox + dx))
                    .fold(f32::NEG_INFINITY, f32::max);
                assert_eq!(g.value(y).at(c, oy, ox), m);
            }
        }
    }
}

#[test]
fn upsample_cases() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::full(vec![1, 1, 1], 2.5)).unwrap();
    let y = g.upsample2(x).unwrap();
    assert_eq!(g.value(y), &Tensor::full(vec![1, 2, 2], 2.5));

    let c = g.constant(Tensor::full(vec![2, 4, 4], 1.5)).unwrap();
    let down = g.maxpool2(c).unwrap();
    let up = g.upsample2(down).unwrap();
    assert_eq!(g.value(up), g.value(c));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let src: Tensor<f32> = random(&[2, 3, 3], &mut rng, -1.0, 1.0);
    let s = g.constant(src.clone()).unwrap();
    let up = g.upsample2(s).unwrap();
    let out = g.value(up);
    for c in 0..2 {
        for y in 0..6 {
            for x in 0..6 {
                let flat = (c * 6 + y) * 6 + x;
                let (cc, sy, sx) = (flat / 36, (flat % 36) / 6 / 2, (flat % 6) / 2);
                assert_eq!(out.data()[flat], src.data()[(cc * 3 + sy) * 3 + sx]);
            }
        }
    }
}

#[test]
fn concat_cases() {
    let mut g = Graph::<f64>::new();
    let a = Tensor::from_fn(vec![1, 2, 3], |i| i as f64);
    let b = Tensor::from_fn(vec![2, 2, 3], |i| 10.0 + i as f64);
    let av = g.param(a.clone()).unwrap();
    let bv = g.param(b.clone()).unwrap();
    let single = g.concat(&[av]).unwrap();
    assert_eq!(g.value(single), &a);
    let both = g.concat(&[av, bv]).unwrap();
    assert_eq!(g.value(both).shape(), &[3, 2, 3]);
    assert_eq!(g.value(both).channel_slice(0, 1).unwrap(), a);
    assert_eq!(g.value(both).channel_slice(1, 2).unwrap(), b);

    // objective touching only the second part: gradient of the first must be zero
    let sl = g.slice_channels(both, 1, 2).unwrap();
    let s = g.sum(sl).unwrap();
    let grads = g.backward(s).unwrap();
    assert!(grads.get(av).unwrap().data().iter().all(|&v| v == 0.0));
    assert!(grads.get(bv).unwrap().data().iter().all(|&v| v == 1.0));

    let bad = g.constant(Tensor::zeros(vec![1, 3, 3])).unwrap();
    assert!(g.concat(&[av, bad]).is_err());
}

#[test]
fn concat_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = vec![random::<f64>(&[1, 3, 4], &mut rng, -1.0, 1.0), random(&[2, 3, 4], &mut rng, -1.0, 1.0)];
    let r = grad_check(&inputs, 1e-6, |g, v| {
        let c = g.concat(&[v[0], v[1]])?;
        let part = g.slice_channels(c, 1, 2)?;
        weighted_sum(g, part, 9)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn softmax_pair_cases() {
    let mut g = Graph::<f32>::new();
    let eq = g.constant(Tensor::full(vec![2, 3, 3], 0.3)).unwrap();
    let s = g.softmax_pair(eq).unwrap();
    assert!(g.value(s).data().iter().all(|&v| v == 0.5));

    let sat = g.constant(Tensor::new(vec![2, 1, 1], vec![20.0, -20.0]).unwrap()).unwrap();
    let s = g.softmax_pair(sat).unwrap();
    let v = g.value(s).data();
    assert!((v[0] - 1.0).abs() < 1e-6 && v[1].abs() < 1e-6 && v[1] > 0.0);

    let three = g.constant(Tensor::zeros(vec![3, 1, 1])).unwrap();
    assert!(g.softmax_pair(three).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let logits: Tensor<f64> = random(&[2, 4, 5], &mut rng, -4.0, 4.0);
    let mut g = Graph::<f64>::new();
    let l = g.constant(logits.clone()).unwrap();
    let s = g.softmax_pair(l).unwrap();
    for p in 0..20 {
        let (a, b) = (logits.data()[p].exp(), logits.data()[20 + p].exp());
        assert!((g.value(s).data()[p] - a / (a + b)).abs() < 1e-12);
        assert!((g.value(s).data()[20 + p] - b / (a + b)).abs() < 1e-12);
    }
}

#[test]
fn elementwise_cases() {
    let mut g = Graph::<f32>::new();
    let z = g.constant(Tensor::zeros(vec![1, 2, 2])).unwrap();
    let l = g.ln1p(z).unwrap();
    assert!(g.value(l).data().iter().all(|&v| v == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Tensor<f32> = random(&[3, 4, 4], &mut rng, -3.0, 3.0);
    let xv = g.constant(x.clone()).unwrap();
    let ones = g.constant(Tensor::full(vec![3, 4, 4], 1.0)).unwrap();
    let m = g.mul(xv, ones).unwrap();
    assert_eq!(g.value(m), &x);

    let neg = g.constant(Tensor::full(vec![1, 1, 2], -0.5)).unwrap();
    assert!(matches!(g.ln1p(neg), Err(TensorError::Domain { op: "ln1p", .. })));
    let other = g.constant(Tensor::zeros(vec![1, 4, 4])).unwrap();
    assert!(g.add(xv, other).is_err());
}

/// Sentinel range selecting [`kink_free`] inputs.
const KINK_FREE: f64 = f64::NEG_INFINITY;

fn check_all_shapes<F>(shapes: &[Vec<Vec<usize>>], f: F, lo: f64, hi: f64)
where
    F: Fn(&mut Graph<f32>, &[Var]) -> Result<Var, TensorError> + Copy,
{
    for (k, shape_set) in shapes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let inputs: Vec<Tensor<f32>> = shape_set
            .iter()
            .map(|s| if lo == KINK_FREE { kink_free(s, &mut rng) } else { random(s, &mut rng, lo, hi) })
            .collect();
        let r = grad_check(&inputs, 5e-3, f).unwrap();
        assert!(r.max_rel_error < 1e-3, "shapes {shape_set:?}: {r:?}");
    }
}

#[test]
fn composite_graph_gradient_f32() {
    // (a + b) * relu(a) + ln1p(b²)
    let f = |g: &mut Graph<f32>, v: &[Var]| {
        let s = g.add(v[0], v[1])?;
        let r = g.relu(v[0])?;
        let m = g.mul(s, r)?;
        let sq = g.mul(v[1], v[1])?;
        let l = g.ln1p(sq)?;
        let t = g.add(m, l)?;
        weighted_sum(g, t, 11)
    };
    let shapes = vec![
        vec![vec![1, 3, 3], vec![1, 3, 3]],
        vec![vec![2, 4, 5], vec![2, 4, 5]],
        vec![vec![3, 6, 2], vec![3, 6, 2]],
    ];
    check_all_shapes(&shapes, f, KINK_FREE, 0.0);
}

#[test]
fn every_op_passes_f32_gradient_check() {
    let conv = |g: &mut Graph<f32>, v: &[Var]| {
        let y = g.conv2d(v[0], v[1], v[2])?;
        weighted_sum(g, y, 1)
    };
    check_all_shapes(
        &[
            vec![vec![1, 3, 3], vec![2, 1, 3, 3], vec![2]],
            vec![vec![2, 4, 6], vec![3, 2, 3, 3], vec![3]],
            vec![vec![3, 5, 4], vec![2, 3, 3, 3], vec![2]],
        ],
        conv,
        -1.0,
        1.0,
    );

    let img_shapes: Vec<Vec<Vec<usize>>> = vec![vec![vec![1, 2, 2]], vec![vec![2, 4, 6]], vec![vec![3, 6, 4]]];
    let unary: Vec<fn(&mut Graph<f32>, Var) -> Result<Var, TensorError>> = vec![
        |g, x| g.maxpool2(x),
        |g, x| g.avgpool2(x),
        |g, x| g.upsample2(x),
        |g, x| g.relu(x),
        |g, x| g.channel_sum(x),
        |g, x| g.scale(x, 0.37),
        |g, x| {
            let k: Vec<f32> = (0..9).map(|i| (i as f32 - 4.0) * 0.1).collect();
            g.filter(x, &k, 3)
        },
    ];
    for op in unary {
        for shapes in &img_shapes {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let inputs = vec![kink_free::<f32>(&shapes[0], &mut rng)];
            let r = grad_check(&inputs, 5e-3, |g, v| {
                let y = op(g, v[0])?;
                weighted_sum(g, y, 2)
            })
            .unwrap();
            assert!(r.max_rel_error < 1e-3, "{shapes:?}: {r:?}");
        }
    }

    let ln1p = |g: &mut Graph<f32>, v: &[Var]| {
        let y = g.ln1p(v[0])?;
        weighted_sum(g, y, 3)
    };
    check_all_shapes(&img_shapes, ln1p, 0.1, 2.0);

    let softmax = |g: &mut Graph<f32>, v: &[Var]| {
        let y = g.softmax_pair(v[0])?;
        weighted_sum(g, y, 4)
    };
    check_all_shapes(&[vec![vec![2, 1, 1]], vec![vec![2, 3, 4]], vec![vec![2, 5, 2]]], softmax, -3.0, 3.0);

    let binary = |g: &mut Graph<f32>, v: &[Var]| {
        let a = g.add(v[0], v[1])?;
        let s = g.sub(a, v[1])?;
        let m = g.mul(s, v[1])?;
        weighted_sum(g, m, 5)
    };
    check_all_shapes(
        &[vec![vec![1, 2, 2]; 2], vec![vec![2, 3, 4]; 2], vec![vec![3, 2, 5]; 2]],
        binary,
        -1.0,
        1.0,
    );

    let mul_channel = |g: &mut Graph<f32>, v: &[Var]| {
        let y = g.mul_channel(v[0], v[1])?;
        weighted_sum(g, y, 6)
    };
    check_all_shapes(
        &[
            vec![vec![1, 2, 2], vec![3, 2, 2]],
            vec![vec![1, 3, 4], vec![2, 3, 4]],
            vec![vec![1, 4, 1], vec![5, 4, 1]],
        ],
        mul_channel,
        -1.0,
        1.0,
    );

    let smape = |g: &mut Graph<f32>, v: &[Var]| g.smape(v[0], v[1], 0.01);
    check_all_shapes(
        &[vec![vec![3, 2, 2]; 2], vec![vec![3, 4, 3]; 2], vec![vec![3, 1, 5]; 2]],
        smape,
        0.2,
        2.0,
    );

    let l1 = |g: &mut Graph<f32>, v: &[Var]| g.l1_mean(v[0], v[1]);
    check_all_shapes(&[vec![vec![1, 2, 2]; 2], vec![vec![2, 3, 3]; 2], vec![vec![3, 4, 2]; 2]], l1, KINK_FREE, 0.0);
}

#[test]
fn linear_function_gradient_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs = vec![random::<f64>(&[2, 3, 3], &mut rng, -1.0, 1.0)];
    let r = grad_check(&inputs, 1e-3, |g, v| {
        let s = g.scale(v[0], 3.0)?;
        weighted_sum(g, s, 12)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn conv_relu_sum_f64_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inputs = vec![
        random::<f64>(&[3, 6, 6], &mut rng, -1.0, 1.0),
        random(&[4, 3, 3, 3], &mut rng, -1.0, 1.0),
        random(&[4], &mut rng, -0.5, 0.5),
    ];
    let r = grad_check(&inputs, 1e-6, |g, v| {
        let y = g.conv2d(v[0], v[1], v[2])?;
        let y = g.relu(y)?;
        weighted_sum(g, y, 13)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_sums_to_one(a in -1e6f32..1e6, b in -1e6f32..1e6) {
        let mut g = Graph::<f32>::new();
        let l = g.constant(Tensor::new(vec![2, 1, 1], vec![a, b]).unwrap()).unwrap();
        let s = g.softmax_pair(l).unwrap();
        let v = g.value(s).data();
        prop_assert!((v[0] + v[1] - 1.0).abs() <= 1e-6);
        prop_assert!(v[0] >= 0.0 && v[1] >= 0.0);
    }

    #[test]
    fn ops_stay_finite_on_extreme_inputs(vals in proptest::collection::vec(-1e6f32..1e6, 16)) {
        let mut g = Graph::<f32>::new();
        let x = g.param(Tensor::new(vec![1, 4, 4], vals.clone()).unwrap()).unwrap();
        let w = g.param(Tensor::full(vec![2, 1, 3, 3], 0.1)).unwrap();
        let b = g.param(Tensor::zeros(vec![2])).unwrap();
        let y = g.conv2d(x, w, b).unwrap();
        let y = g.relu(y).unwrap();
        let p = g.maxpool2(y).unwrap();
        let a = g.avgpool2(y).unwrap();
        let pa = g.add(p, a).unwrap();
        let u = g.upsample2(pa).unwrap();
        let sm_in = g.slice_channels(u, 0, 2).unwrap();
        let s = g.softmax_pair(sm_in).unwrap();
        let l = g.ln1p(s).unwrap();
        let r = g.smape(l, s, 0.01).unwrap();
        let grads = g.backward(r).unwrap();
        prop_assert!(g.value(r).is_finite());
        prop_assert!(grads.get(x).map_or(true, |t| t.is_finite()));
    }
}
