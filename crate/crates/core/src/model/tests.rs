use super::*;
use crate::autodiff::{gradcheck::check_gradients, Graph, Node};
use crate::field::{ComplexField, Domain};
use crate::sampling::{Pattern, SamplingMask};
use crate::transforms::{apply_mask, fft2c, ifft2c};
use ndarray::{Array2, Array4};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        n_rec: 2,
        n_sdrdb: 1,
        base_channels: 8,
        growth_channels: 4,
        se_reduction: 4,
        use_prior: false,
        ..ModelConfig::default()
    }
}

fn random_field(h: usize, w: usize, seed: u64, domain: Domain) -> ComplexField<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Array2::from_shape_fn((h, w), |_| {
        Complex::new(rng.gen_range(-1.0f32..1.0), rng.gen_range(-1.0f32..1.0))
    });
    ComplexField::new(data, domain).unwrap()
}

#[test]
fn receptive_field_matches_composition_rule() {
    assert_eq!(receptive_field(3, &[1]), 3);
    assert_eq!(receptive_field(3, &[1, 2]), 7);
    assert_eq!(receptive_field(3, &[1, 2, 4, 4]), 23);
    assert_eq!(receptive_field(3, &[1, 1, 1, 1]), 9);
}

#[test]
fn sdrdb_zero_lff_is_identity() {
    let cfg = tiny_cfg();
    let mut params = init_params::<f64>(&cfg, 1, false).unwrap();
    for name in ["idrd.sdrdb0.lff.w", "idrd.sdrdb0.lff.b"] {
        params.get_mut(name).unwrap().fill(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input = Array4::from_shape_fn((1, 8, 12, 12), |_| rng.gen_range(-1.0..1.0));
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, &params, false);
    let leaf = g.leaf(input.clone(), false);
    let out = sdrdb_forward(&mut g, &bound, "idrd.sdrdb0", leaf, &cfg);
    assert_eq!(g.value(out), &input);
}

fn footprint_of(cfg: &ModelConfig, seed: u64) -> (usize, usize) {
    // Random weights, zero biases, zero baseline input: everything outside the
    // convolutional cone stays exactly zero, so the footprint is exact.
    let params = init_params::<f64>(cfg, seed, false).unwrap();
    let size = 31usize;
    let mut probe = Array4::zeros((1, cfg.base_channels, size, size));
    probe[[0, 0, size / 2, size / 2]] = 1.0;
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, &params, false);
    let leaf = g.leaf(probe, false);
    let out = sdrdb_forward(&mut g, &bound, "idrd.sdrdb0", leaf, cfg);
    let v = g.value(out);
    let (mut rmin, mut rmax, mut cmin, mut cmax) = (size, 0usize, size, 0usize);
    for ((_, _, y, z), &val) in v.indexed_iter() {
        if val != 0.0 {
            rmin = rmin.min(y);
            rmax = rmax.max(y);
            cmin = cmin.min(z);
            cmax = cmax.max(z);
        }
    }
    (rmax - rmin + 1, cmax - cmin + 1)
}

#[test]
fn sdrdb_perturbation_footprint_is_bounded_by_receptive_field() {
    let dilated = tiny_cfg();
    let (h, w) = footprint_of(&dilated, 3);
    assert!(h <= 23 && w <= 23, "dilated footprint {h}x{w}");
    assert!(h > 9 || w > 9, "dilated footprint should exceed the undilated bound");

    let undilated = ModelConfig { use_dilation: false, ..tiny_cfg() };
    let (h, w) = footprint_of(&undilated, 3);
    assert!(h <= 9 && w <= 9, "undilated footprint {h}x{w}");
}

#[test]
fn drdnet_output_shape_and_zero_final_layer() {
    let cfg = tiny_cfg();
    let mut params = init_params::<f64>(&cfg, 4, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = Array4::from_shape_fn((2, 2, 10, 14), |_| rng.gen_range(-1.0..1.0));

    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, &params, false);
    let leaf = g.leaf(input.clone(), false);
    let out = drdnet_forward(&mut g, &bound, "idrd", leaf, &cfg);
    assert_eq!(g.value(out).dim(), (2, 2, 10, 14));

    for name in ["idrd.final.w", "idrd.final.b"] {
        params.get_mut(name).unwrap().fill(0.0);
    }
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, &params, false);
    let leaf = g.leaf(input, false);
    let out = drdnet_forward(&mut g, &bound, "idrd", leaf, &cfg);
    assert!(g.value(out).iter().all(|&v| v == 0.0));
}

#[test]
fn drdnet_gradients_match_finite_differences() {
    // smoke-scale version of the full gradient audit in the acceptance suite
    let cfg = ModelConfig {
        n_sdrdb: 1,
        base_channels: 4,
        growth_channels: 2,
        se_reduction: 2,
        use_prior: false,
        ..ModelConfig::default()
    };
    let params = init_params::<f64>(&cfg, 6, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let input = Array4::from_shape_fn((1, 2, 8, 8), |_| rng.gen_range(-1.0..1.0));
    let target = Array4::from_shape_fn((1, 2, 8, 8), |_| rng.gen_range(-1.0..1.0));

    let names: Vec<String> = params.names().to_vec();
    let values: Vec<Array4<f64>> = params.values().to_vec();
    let cfg2 = cfg.clone();
    let build = move |g: &mut Graph<f64>, leaves: &[Node]| {
        // leaves[0] is the input; the rest follow parameter order
        let mut map = std::collections::HashMap::new();
        for (name, leaf) in names.iter().zip(leaves[1..].iter()) {
            map.insert(name.clone(), *leaf);
        }
        let bound = BoundParams::from_nodes(map);
        let out = drdnet_forward(g, &bound, "idrd", leaves[0], &cfg2);
        g.mse(out, target.clone())
    };
    let mut inputs = vec![input];
    inputs.extend(values);
    // check a representative subset of parameters end to end
    for target_idx in [1, 4, 9, inputs.len() - 2, inputs.len() - 1] {
        let r = check_gradients(&build, &inputs, target_idx, 1e-5, 1e-6);
        assert!(r.max_rel_err < 1e-5, "param {target_idx}: {r:?}");
    }
}

#[test]
fn weight_sharing_keeps_parameter_count_constant() {
    for n_rec in [1usize, 3, 5] {
        let cfg = ModelConfig { n_rec, ..tiny_cfg() };
        let params = init_params::<f32>(&cfg, 0, true).unwrap();
        let base = init_params::<f32>(&ModelConfig { n_rec: 1, ..tiny_cfg() }, 0, true).unwrap();
        assert_eq!(params.count_parameters(), base.count_parameters(), "n_rec {n_rec}");
    }
    // without sharing the count grows with n_rec
    let unshared = |n_rec| {
        let cfg = ModelConfig { n_rec, share_weights: false, ..tiny_cfg() };
        init_params::<f32>(&cfg, 0, true).unwrap().count_parameters()
    };
    assert_eq!(unshared(2), 2 * unshared(1));
}

#[test]
fn dual_domain_toggle_removes_exactly_the_kspace_network() {
    let dual = init_params::<f32>(&tiny_cfg(), 0, true).unwrap();
    let single = init_params::<f32>(
        &ModelConfig { use_dual_domain: false, ..tiny_cfg() },
        0,
        true,
    )
    .unwrap();
    let kdrd: usize = dual
        .iter()
        .filter(|(n, _)| n.starts_with("kdrd."))
        .map(|(_, v)| v.len())
        .sum();
    assert!(kdrd > 0);
    assert_eq!(dual.count_parameters() - kdrd, single.count_parameters());
}

#[test]
fn parameter_count_matches_layer_shape_audit() {
    // G0=8, G=4, 1 block, no prior, single domain: sum of all layer shapes
    let cfg = ModelConfig {
        n_sdrdb: 1,
        base_channels: 8,
        growth_channels: 4,
        se_reduction: 4,
        use_prior: false,
        use_dual_domain: false,
        ..ModelConfig::default()
    };
    let params = init_params::<f32>(&cfg, 0, true).unwrap();
    let expected: usize = [
        8 * 2 * 9 + 8,   // ife1
        8 * 8 * 9 + 8,   // ife2
        4 * 8 * 9 + 4,   // dense conv t=0
        4 * 12 * 9 + 4,  // t=1
        4 * 16 * 9 + 4,  // t=2
        4 * 20 * 9 + 4,  // t=3
        8 * 24 + 8,      // lff 1x1
        2 * 8 + 2,       // se bottleneck
        8 * 2 + 8,       // se expand
        8 * 8 + 8,       // gff 1x1
        8 * 8 * 9 + 8,   // gff 3x3
        2 * 8 * 9 + 2,   // final
    ]
    .iter()
    .sum();
    assert_eq!(params.count_parameters(), expected);
}

fn ones_mask(h: usize, w: usize) -> SamplingMask {
    SamplingMask::new(Array2::ones((h, w)), Pattern::Cartesian, 1.0, 0).unwrap()
}

#[test]
fn full_sampling_with_direct_substitution_recovers_input_exactly() {
    let cfg = ModelConfig { lambda_dc: 0.0, n_rec: 2, ..tiny_cfg() };
    let params = init_params::<f32>(&cfg, 11, false).unwrap(); // random weights
    let x_f = random_field(16, 16, 12, Domain::Image);
    let k_full = fft2c(&x_f).unwrap();
    let mask = ones_mask(16, 16);
    let k_u = apply_mask(&k_full, &mask).unwrap();
    let out = dudornet_forward(&k_u, &mask, None, &cfg, &params).unwrap();
    // the direct-substitution DC restores k_u everywhere, so the final output
    // is bit-identical to the zero-filled reconstruction of k_u
    let expected = ifft2c(&k_u).unwrap();
    assert_eq!(out.x_final.data(), expected.data());
    // and within transform tolerance of the ground truth
    let rel = out
        .x_final
        .data()
        .iter()
        .zip(x_f.data().iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f32>()
        .sqrt()
        / x_f.l2_norm();
    assert!(rel < 1e-5, "rel {rel}");
}

#[test]
fn zero_weights_and_direct_substitution_give_zero_filled_recon() {
    let cfg = ModelConfig { lambda_dc: 0.0, ..tiny_cfg() };
    let mut params = init_params::<f32>(&cfg, 13, false).unwrap();
    for v in params.values_mut() {
        v.fill(0.0);
    }
    let x_f = random_field(16, 16, 14, Domain::Image);
    let mask = crate::sampling::cartesian_mask(16, 16, 2.0, 0.1, 3).unwrap();
    let k_u = apply_mask(&fft2c(&x_f).unwrap(), &mask).unwrap();
    let out = dudornet_forward(&k_u, &mask, None, &cfg, &params).unwrap();
    let zp = crate::transforms::zero_fill_recon(&k_u, &mask).unwrap();
    let max_diff = out
        .x_final
        .data()
        .iter()
        .zip(zp.data().iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f32, f32::max);
    assert!(max_diff == 0.0, "max diff {max_diff}");
}

#[test]
fn block_outputs_have_n_rec_entries() {
    assert_eq!(ModelConfig::default().n_rec, 5);
    let cfg = ModelConfig { n_rec: 5, ..tiny_cfg() };
    let params = init_params::<f32>(&cfg, 15, true).unwrap();
    let x_f = random_field(16, 16, 16, Domain::Image);
    let mask = crate::sampling::cartesian_mask(16, 16, 2.0, 0.1, 4).unwrap();
    let k_u = apply_mask(&fft2c(&x_f).unwrap(), &mask).unwrap();
    let out = dudornet_forward(&k_u, &mask, None, &cfg, &params).unwrap();
    assert_eq!(out.x_blocks.len(), 5);
    assert_eq!(out.k_blocks.len(), 5);
}

#[test]
fn missing_prior_is_a_configuration_error() {
    let cfg = ModelConfig { use_prior: true, ..tiny_cfg() };
    let params = init_params::<f32>(&cfg, 17, true).unwrap();
    let x_f = random_field(16, 16, 18, Domain::Image);
    let mask = ones_mask(16, 16);
    let k_u = apply_mask(&fft2c(&x_f).unwrap(), &mask).unwrap();
    assert!(matches!(
        dudornet_forward(&k_u, &mask, None, &cfg, &params),
        Err(crate::Error::Config(_))
    ));
}

#[test]
fn forward_is_deterministic() {
    let cfg = tiny_cfg();
    let params = init_params::<f32>(&cfg, 19, false).unwrap();
    let x_f = random_field(16, 16, 20, Domain::Image);
    let mask = crate::sampling::cartesian_mask(16, 16, 2.0, 0.1, 5).unwrap();
    let k_u = apply_mask(&fft2c(&x_f).unwrap(), &mask).unwrap();
    let a = dudornet_forward(&k_u, &mask, None, &cfg, &params).unwrap();
    let b = dudornet_forward(&k_u, &mask, None, &cfg, &params).unwrap();
    assert_eq!(a.x_final.data(), b.x_final.data());
}
