use autodiff::gradcheck::{check, DEFAULT_EPS};
use autodiff::{Graph, Mask, NodeId, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.5..1.5))
}

/// Weighted sum with fixed pseudo-random weights so that no output
/// coordinate's gradient is trivially uniform.
fn probe(g: &mut Graph<f64>, x: NodeId, seed: u64) -> autodiff::Result<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::from_fn(g.shape(x), |_| rng.random_range(-1.0..1.0));
    let w = g.constant(w);
    let p = g.mul(x, w)?;
    g.sum_all(p)
}

#[test]
fn matmul_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 5], &mut rng);
    let b = random(&[5, 2], &mut rng);
    let r = check(&[a, b], DEFAULT_EPS, |g, x| {
        let c = g.matmul(x[0], x[1])?;
        g.sum_all(c)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn gelu_gradient_at_twenty_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::from_fn(&[20], |_| rng.random_range(-4.0..4.0));
    let r = check(&[x], DEFAULT_EPS, |g, x| {
        let y = g.gelu(x[0])?;
        g.sum_all(y)
    })
    .unwrap();
    assert_eq!(r.coordinates, 20);
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn bce_gradient_on_random_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = Tensor::from_fn(&[4, 7], |_| rng.random_range(-5.0..5.0));
    let t = Tensor::from_fn(&[4, 7], |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
    let r = check(&[z], DEFAULT_EPS, |g, x| g.bce_with_logits(x[0], &t)).unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn fully_masked_column_gets_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 5;
    let scores = random(&[n, n], &mut rng);
    let values = random(&[n, 3], &mut rng);
    // Column 2 masked everywhere: value row 2 must not influence the output.
    let keep: Vec<bool> = (0..n * n).map(|i| i % n != 2).collect();
    let mask = Mask::new(&[n, n], keep).unwrap();
    let build = |g: &mut Graph<f64>, x: &[NodeId]| {
        let f = g.masked_fill(x[0], &mask, autodiff::DEFAULT_MASK_FILL)?;
        let w = g.softmax(f, 1)?;
        let o = g.matmul(w, x[1])?;
        probe(g, o, 9)
    };
    let r = check(&[scores.clone(), values.clone()], DEFAULT_EPS, build).unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");

    let mut g = Graph::new();
    let s = g.param(scores);
    let v = g.param(values);
    let out = build(&mut g, &[s, v]).unwrap();
    g.backward(out).unwrap();
    let gv = g.grad(v).unwrap();
    for d in 0..3 {
        assert!(gv[2 * 3 + d].abs() < 1e-20);
    }
    let gs = g.grad(s).unwrap();
    for row in 0..n {
        assert!(gs[row * n + 2].abs() < 1e-20);
    }
}

#[test]
fn masked_weights_are_negligible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = Graph::<f64>::new();
    let s = g.constant(Tensor::from_fn(&[2, 4, 4], |_| rng.random_range(-30.0..30.0)));
    let keep: Vec<bool> = (0..16).map(|i| (i * 7) % 3 != 0 || i % 5 == 0).collect();
    let mask = Mask::new(&[4, 4], keep.clone()).unwrap();
    let f = g.masked_fill(s, &mask, -1e9).unwrap();
    let w = g.softmax(f, 2).unwrap();
    for (i, &x) in g.value(w).data().iter().enumerate() {
        if !keep[i % 16] {
            assert!(x < 1e-30);
        }
    }
}

#[test]
fn layer_norm_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[3, 2, 6], &mut rng);
    let gain = random(&[6], &mut rng);
    let bias = random(&[6], &mut rng);
    let r = check(&[x, gain, bias], DEFAULT_EPS, |g, x| {
        let y = g.layer_norm(x[0], 2, x[1], x[2], 1e-5)?;
        probe(g, y, 11)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");

    // Normalizing a middle axis.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&[2, 5, 3], &mut rng);
    let gain = random(&[5], &mut rng);
    let bias = random(&[5], &mut rng);
    let r = check(&[x, gain, bias], DEFAULT_EPS, |g, x| {
        let y = g.layer_norm(x[0], 1, x[1], x[2], 1e-5)?;
        probe(g, y, 12)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn batched_matmul_with_shared_operands() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shared = random(&[3, 4], &mut rng);
    let batched = random(&[2, 2, 4, 5], &mut rng);
    let r = check(&[shared.clone(), batched.clone()], DEFAULT_EPS, |g, x| {
        let c = g.matmul(x[0], x[1])?;
        probe(g, c, 13)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");

    let tall = random(&[2, 3, 3, 4], &mut rng);
    let w = random(&[4, 2], &mut rng);
    let r = check(&[tall, w], DEFAULT_EPS, |g, x| {
        let c = g.matmul(x[0], x[1])?;
        probe(g, c, 14)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");

    let a = random(&[2, 3, 4], &mut rng);
    let b = random(&[2, 4, 2], &mut rng);
    let r = check(&[a, b], DEFAULT_EPS, |g, x| {
        let c = g.matmul(x[0], x[1])?;
        probe(g, c, 15)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn shape_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random(&[2, 3, 4], &mut rng);
    let b = random(&[2, 2, 4], &mut rng);
    let r = check(&[a, b], DEFAULT_EPS, |g, x| {
        let c = g.concat(&[x[0], x[1]], 1)?;
        let p = g.permute(c, &[2, 0, 1])?;
        let t = g.transpose(p)?;
        let r = g.reshape(t, &[4, 10])?;
        let s = g.slice(r, 1, 3, 5)?;
        let m = g.mean_axis(s, 0)?;
        let q = g.sum_axis(s, 1)?;
        let mq = g.mean_all(q)?;
        let pm = probe(g, m, 16)?;
        g.add(pm, mq)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn pointwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // keep relu inputs away from the kink
    let x = Tensor::from_fn(&[3, 4], |_| {
        let v: f64 = rng.random_range(0.1..2.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let y = random(&[4], &mut rng);
    let r = check(&[x, y], DEFAULT_EPS, |g, x| {
        let a = g.relu(x[0])?;
        let b = g.sigmoid(x[0])?;
        let c = g.mul(a, b)?;
        let d = g.sub(c, x[1])?;
        let e = g.scale(d, 0.7)?;
        let f = g.softmax(e, 0)?;
        probe(g, f, 17)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn forward_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::from_fn(&[4, 8, 16], |_| rng.random_range(-1.0..1.0)));
        let w = g.constant(Tensor::from_fn(&[16, 16], |_| rng.random_range(-1.0..1.0)));
        let h = g.matmul(a, w).unwrap();
        let s = g.softmax(h, 2).unwrap();
        g.value(s).data().to_vec()
    };
    assert_eq!(run(), run());
}

fn shape_strategy() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..4, 1usize..5, 1usize..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn softmax_rows_sum_to_one((a, b, c) in shape_strategy(), seed in 0u64..1000, axis in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [a, b, c];
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn(&shape, |_| rng.random_range(-50.0..50.0)));
        let s = g.softmax(x, axis).unwrap();
        let sums = g.sum_axis(s, axis).unwrap();
        for &v in g.value(s).data() {
            prop_assert!(v >= 0.0);
        }
        for &v in g.value(sums).data() {
            prop_assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn composite_ops_pass_gradcheck((a, b, c) in shape_strategy(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[a, b, c], &mut rng);
        let w = random(&[c, b], &mut rng);
        let bias = random(&[b], &mut rng);
        let gain = random(&[b], &mut rng);
        let r = check(&[x, w, bias, gain], 1e-5, |g, x| {
            let h = g.matmul(x[0], x[1])?;          // (a, b, b)
            let h = g.add(h, x[2])?;
            let n = g.layer_norm(h, 2, x[3], x[2], 1e-5)?;
            let e = g.gelu(n)?;
            let s = g.softmax(e, 1)?;
            probe(g, s, seed)
        }).unwrap();
        prop_assert!(r.max_rel_error < 1e-4, "{:?}", r);
    }
}
