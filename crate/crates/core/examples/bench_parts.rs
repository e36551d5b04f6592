//! Microbenchmarks for the训练 hot path pieces (dev probe).
use ddmri_core::autodiff::{conv2d_raw, Graph};
use ndarray::{Array2, Array4};
use std::time::Instant;

fn time<F: FnMut()>(label: &str, iters: usize, mut f: F) {
    let t0 = Instant::now();
    for _ in 0..iters {
        f();
    }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    println!("{label}: {:.4} s/iter", dt);
}

fn main() {
    let w = Array2::<f32>::from_elem((16, 360), 0.01);
    let cols = Array2::<f32>::from_elem((360, 16384), 0.02);
    time("sgemm 16x360x16384", 20, || {
        let out = w.dot(&cols);
        std::hint::black_box(&out);
    });

    let x = Array4::<f32>::from_elem((2, 40, 128, 128), 0.1);
    let wt = Array4::<f32>::from_elem((8, 40, 3, 3), 0.01);
    let b = Array4::<f32>::from_elem((1, 8, 1, 1), 0.0);
    time("conv fwd batch2 40->8 3x3 d1", 10, || {
        let out = conv2d_raw(&x, &wt, &b, 1);
        std::hint::black_box(&out);
    });

    let xc = Array4::<f32>::from_elem((2, 2, 128, 128), 0.1);
    time("fft2c (N=2, 128x128)", 20, || {
        let mut g = Graph::<f32>::new();
        let leaf = g.leaf(xc.clone(), false);
        let k = g.fft2c(leaf);
        std::hint::black_box(g.value(k));
    });

    // graph-scale probe: one conv node fwd+bwd
    let t = Array4::<f32>::from_elem((2, 8, 128, 128), 0.0);
    time("conv node fwd+bwd", 10, || {
        let mut g = Graph::<f32>::new();
        let xl = g.leaf(x.clone(), false);
        let wl = g.leaf(wt.clone(), true);
        let bl = g.leaf(b.clone(), true);
        let y = g.conv2d(xl, wl, bl, 1);
        let loss = g.mse(y, t.clone());
        let grads = g.backward(loss).unwrap();
        std::hint::black_box(&grads);
    });
}
