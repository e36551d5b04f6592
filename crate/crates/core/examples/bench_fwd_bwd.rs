//! Forward/backward wall-time split at the overfit configuration.
use ddmri_core::model::*;
use ddmri_core::phantom::{generate_phantom, PhantomSpec, Sample};
use ddmri_core::sampling::spiral_mask;
use ddmri_core::transforms::apply_mask;
use ndarray::Array4;
use std::time::Instant;

fn main() {
    let cfg = ModelConfig {
        n_rec: 2, n_sdrdb: 2, base_channels: 16, growth_channels: 8,
        se_reduction: 8, lambda_dc: 0.0, use_prior: true, ..ModelConfig::default()
    };
    let params: ParamSet<f32> = init_params(&cfg, 0, true).unwrap();
    let mut samples = Vec::new();
    for seed in 0..2u64 {
        let (p, t) = generate_phantom::<f32>(&PhantomSpec::new(128, 128, seed)).unwrap();
        samples.push(Sample::from_images(format!("s{seed}"), p, t).unwrap());
    }
    let mask = spiral_mask(128, 128, 3.0, 1).unwrap();
    let k_u: Vec<_> = samples.iter().map(|s| apply_mask(&s.k_full, &mask).unwrap()).collect();
    let priors: Vec<_> = samples.iter().map(|s| s.x_prior.clone()).collect();
    let inputs = BatchInputs::new(&k_u, &[&mask, &mask], Some(&priors)).unwrap();

    let t0 = Instant::now();
    let mut g = ddmri_core::autodiff::Graph::<f32>::new();
    let bound = BoundParams::bind(&mut g, &params, true);
    let nodes = build_forward(&mut g, &bound, &cfg, &inputs).unwrap();
    let x_f = Array4::<f32>::zeros((2, 2, 128, 128));
    let mut terms = Vec::new();
    for &x in &nodes.x_blocks { terms.push((g.mse(x, x_f.clone()), 1.0f32)); }
    for &k in &nodes.k_blocks { terms.push((g.mse(k, x_f.clone()), 1.0f32)); }
    let root = g.sum_scalars(&terms);
    let t_fwd = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let grads = g.backward(root).unwrap();
    let t_bwd = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let collected = bound.collect_grads(&params, &grads);
    let t_col = t2.elapsed().as_secs_f64();
    println!("fwd {t_fwd:.3}s  bwd {t_bwd:.3}s  collect {t_col:.3}s  ({} grads)", collected.len());
}
