use super::gradcheck::check_gradients;
use super::*;
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randn(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

#[test]
fn conv2d_matches_direct_computation() {
    // 1 sample, 1 channel, small kernel applied by hand
    let mut x = Array4::<f64>::zeros((1, 1, 4, 4));
    for i in 0..4 {
        for j in 0..4 {
            x[[0, 0, i, j]] = (i * 4 + j) as f64;
        }
    }
    let mut w = Array4::<f64>::zeros((1, 1, 3, 3));
    w[[0, 0, 1, 1]] = 2.0; // pure center tap
    let b = Array4::from_elem((1, 1, 1, 1), 0.5);
    let out = conv2d_raw(&x, &w, &b, 1);
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(out[[0, 0, i, j]], 2.0 * x[[0, 0, i, j]] + 0.5);
        }
    }
    // shifted tap: w[0,0,0,0] hits x[i-1][j-1] (zero padded)
    let mut w = Array4::<f64>::zeros((1, 1, 3, 3));
    w[[0, 0, 0, 0]] = 1.0;
    let b = Array4::zeros((1, 1, 1, 1));
    let out = conv2d_raw(&x, &w, &b, 1);
    assert_eq!(out[[0, 0, 0, 0]], 0.0);
    assert_eq!(out[[0, 0, 1, 1]], x[[0, 0, 0, 0]]);
    assert_eq!(out[[0, 0, 3, 3]], x[[0, 0, 2, 2]]);
}

#[test]
fn conv2d_dilation_reaches_further() {
    let mut x = Array4::<f64>::zeros((1, 1, 9, 9));
    x[[0, 0, 4, 4]] = 1.0;
    let mut w = Array4::<f64>::zeros((1, 1, 3, 3));
    w[[0, 0, 0, 0]] = 1.0;
    let b = Array4::zeros((1, 1, 1, 1));
    let out = conv2d_raw(&x, &w, &b, 2);
    // tap at offset (-2, -2) relative to output: impulse lands at (6, 6)
    assert_eq!(out[[0, 0, 6, 6]], 1.0);
    assert_eq!(out.sum(), 1.0);
}

#[test]
fn conv2d_gradients_match_fd() {
    let x = randn((2, 3, 5, 5), 1);
    let w = randn((4, 3, 3, 3), 2);
    let b = randn((1, 4, 1, 1), 3);
    let t = randn((2, 4, 5, 5), 4);
    let build = move |g: &mut Graph<f64>, leaves: &[Node]| {
        let y = g.conv2d(leaves[0], leaves[1], leaves[2], 2);
        g.mse(y, t.clone())
    };
    for target in 0..3 {
        let r = check_gradients(&build, &[x.clone(), w.clone(), b.clone()], target, H, FLOOR);
        assert!(r.max_rel_err < TOL, "target {target}: {r:?}");
    }
}

#[test]
fn pointwise_conv_gradients_match_fd() {
    let x = randn((2, 4, 3, 3), 5);
    let w = randn((2, 4, 1, 1), 6);
    let b = randn((1, 2, 1, 1), 7);
    let t = randn((2, 2, 3, 3), 8);
    let build = move |g: &mut Graph<f64>, leaves: &[Node]| {
        let y = g.conv2d(leaves[0], leaves[1], leaves[2], 1);
        g.mse(y, t.clone())
    };
    for target in 0..3 {
        let r = check_gradients(&build, &[x.clone(), w.clone(), b.clone()], target, H, FLOOR);
        assert!(r.max_rel_err < TOL, "target {target}: {r:?}");
    }
}

#[test]
fn activation_gradients_match_fd() {
    // offset inputs away from the kink so central differences are clean
    let mut x = randn((1, 2, 4, 4), 9);
    x.mapv_inplace(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let t = randn((1, 2, 4, 4), 10);
    let t2 = t.clone();
    let leaky = move |g: &mut Graph<f64>, leaves: &[Node]| {
        let y = g.leaky_relu(leaves[0], 0.2);
        g.mse(y, t.clone())
    };
    let r = check_gradients(&leaky, &[x.clone()], 0, H, FLOOR);
    assert!(r.max_rel_err < TOL, "{r:?}");
    let sigmoid = move |g: &mut Graph<f64>, leaves: &[Node]| {
        let y = g.sigmoid(leaves[0]);
        g.mse(y, t2.clone())
    };
    let r = check_gradients(&sigmoid, &[x], 0, H, FLOOR);
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn se_style_pipeline_gradients_match_fd() {
    // pool -> 1x1 -> relu -> 1x1 -> sigmoid -> channel scale, plus residual
    let x = randn((2, 4, 4, 4), 11);
    let w1 = randn((2, 4, 1, 1), 12);
    let b1 = randn((1, 2, 1, 1), 13);
    let w2 = randn((4, 2, 1, 1), 14);
    let b2 = randn((1, 4, 1, 1), 15);
    let t = randn((2, 4, 4, 4), 16);
    let build = move |g: &mut Graph<f64>, leaves: &[Node]| {
        let pooled = g.global_avg_pool(leaves[0]);
        let z = g.conv2d(pooled, leaves[1], leaves[2], 1);
        let z = g.relu(z);
        let z = g.conv2d(z, leaves[3], leaves[4], 1);
        let gates = g.sigmoid(z);
        let scaled = g.scale_channels(leaves[0], gates);
        let out = g.add(scaled, leaves[0]);
        g.mse(out, t.clone())
    };
    let inputs = [x, w1, b1, w2, b2];
    for target in 0..inputs.len() {
        let r = check_gradients(&build, &inputs, target, H, FLOOR);
        assert!(r.max_rel_err < TOL, "target {target}: {r:?}");
    }
}

#[test]
fn concat_add_scale_gradients_match_fd() {
    let a = randn((2, 2, 3, 3), 17);
    let b = randn((2, 3, 3, 3), 18);
    let t = randn((2, 5, 3, 3), 19);
    let build = move |g: &mut Graph<f64>, leaves: &[Node]| {
        let c = g.concat(&[leaves[0], leaves[1]]);
        let s = g.scale_samples(c, &[0.5, -1.5]);
        g.mse(s, t.clone())
    };
    for target in 0..2 {
        let r = check_gradients(&build, &[a.clone(), b.clone()], target, H, FLOOR);
        assert!(r.max_rel_err < TOL, "target {target}: {r:?}");
    }
}

#[test]
fn fourier_round_trip_and_gradients() {
    let x = randn((1, 2, 8, 8), 20);
    let mut g = Graph::<f64>::new();
    let leaf = g.leaf(x.clone(), false);
    let k = g.fft2c(leaf);
    let back = g.ifft2c(k);
    let err = (&x - g.value(back))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err < 1e-12, "round trip err {err}");

    let t = randn((1, 2, 8, 8), 21);
    let build = move |g: &mut Graph<f64>, leaves: &[Node]| {
        let k = g.fft2c(leaves[0]);
        g.mse(k, t.clone())
    };
    let r = check_gradients(&build, &[x.clone()], 0, H, FLOOR);
    assert!(r.max_rel_err < TOL, "fft: {r:?}");

    let t = randn((1, 2, 8, 8), 22);
    let build = move |g: &mut Graph<f64>, leaves: &[Node]| {
        let xk = g.ifft2c(leaves[0]);
        g.mse(xk, t.clone())
    };
    let r = check_gradients(&build, &[x], 0, H, FLOOR);
    assert!(r.max_rel_err < TOL, "ifft: {r:?}");
}

#[test]
fn fourier_on_odd_sizes_round_trips() {
    let x = randn((1, 2, 9, 11), 23);
    let mut g = Graph::<f64>::new();
    let leaf = g.leaf(x.clone(), false);
    let k = g.fft2c(leaf);
    let back = g.ifft2c(k);
    let err = (&x - g.value(back))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err < 1e-12, "odd-size round trip err {err}");
}

#[test]
fn data_consistency_gradients_match_fd() {
    let x = randn((2, 2, 4, 4), 24);
    let k_u = {
        let mut k = randn((2, 2, 4, 4), 25);
        // zero out unsampled positions to satisfy the layer's contract
        for i in 0..2 {
            for c in 0..2 {
                for y in 0..4 {
                    for z in 0..4 {
                        if (y + z) % 2 == 0 {
                            k[[i, c, y, z]] = 0.0;
                        }
                    }
                }
            }
        }
        k
    };
    let mask =
        ndarray::Array3::from_shape_fn((2, 4, 4), |(_, y, z)| if (y + z) % 2 == 1 { 1.0 } else { 0.0 });
    let t = randn((2, 2, 4, 4), 26);
    for lambda in [0.0, 0.01, 1.0] {
        let k_u = k_u.clone();
        let mask = mask.clone();
        let t = t.clone();
        let build = move |g: &mut Graph<f64>, leaves: &[Node]| {
            let y = g.data_consistency(leaves[0], k_u.clone(), mask.clone(), lambda);
            g.mse(y, t.clone())
        };
        let r = check_gradients(&build, &[x.clone()], 0, H, FLOOR);
        assert!(r.max_rel_err < TOL, "lambda {lambda}: {r:?}");
    }
}

#[test]
fn sum_scalars_combines_losses() {
    let x = randn((1, 2, 4, 4), 27);
    let t1 = randn((1, 2, 4, 4), 28);
    let t2 = randn((1, 2, 4, 4), 29);
    let (t1c, t2c) = (t1.clone(), t2.clone());
    let build = move |g: &mut Graph<f64>, leaves: &[Node]| {
        let l1 = g.mse(leaves[0], t1c.clone());
        let l2 = g.mse(leaves[0], t2c.clone());
        g.sum_scalars(&[(l1, 1.0), (l2, 0.5)])
    };
    let mut g = Graph::<f64>::new();
    let leaf = g.leaf(x.clone(), true);
    let root = build(&mut g, &[leaf]);
    let l1 = (&x - &t1).mapv(|v| v * v).mean().unwrap();
    let l2 = (&x - &t2).mapv(|v| v * v).mean().unwrap();
    assert!((g.scalar(root) - (l1 + 0.5 * l2)).abs() < 1e-12);
    let r = check_gradients(&build, &[x], 0, H, FLOOR);
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn shared_leaf_accumulates_gradient_across_uses() {
    // y = w*x used twice: loss = mse(w*x, 0) + mse(w*x, 1)
    let x = Array4::from_elem((1, 1, 2, 2), 1.0);
    let w = Array4::from_elem((1, 1, 1, 1), 0.7);
    let b = Array4::zeros((1, 1, 1, 1));
    let mut g = Graph::<f64>::new();
    let (xl, wl, bl) = (g.leaf(x, false), g.leaf(w, true), g.leaf(b, false));
    let y1 = g.conv2d(xl, wl, bl, 1);
    let y2 = g.conv2d(xl, wl, bl, 1);
    let l1 = g.mse(y1, Array4::zeros((1, 1, 2, 2)));
    let l2 = g.mse(y2, Array4::from_elem((1, 1, 2, 2), 1.0));
    let root = g.sum_scalars(&[(l1, 1.0), (l2, 1.0)]);
    let grads = g.backward(root).unwrap();
    let gw = grads[wl.0].as_ref().unwrap()[[0, 0, 0, 0]];
    // d/dw [w^2 + (w-1)^2] = 2w + 2(w-1)
    let expected = 2.0 * 0.7 + 2.0 * (0.7 - 1.0);
    assert!((gw - expected).abs() < 1e-12, "gw {gw} expected {expected}");
}
