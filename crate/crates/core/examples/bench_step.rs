//! Quick training-throughput probe (not part of the test suite).
use ddmri_core::model::ModelConfig;
use ddmri_core::phantom::{make_dataset, PhantomSpec};
use ddmri_core::training::{train, MaskMode, TrainConfig};

fn main() {
    let dir = std::env::temp_dir().join("ddmri_bench");
    let _ = std::fs::remove_dir_all(&dir);
    let template = PhantomSpec::new(128, 128, 0);
    let ds = make_dataset(8, 1, 1, &template, dir.join("data"), true).unwrap();
    let cfg = TrainConfig {
        model: ModelConfig {
            n_rec: 2,
            n_sdrdb: 2,
            base_channels: 16,
            growth_channels: 8,
            se_reduction: 8,
            lambda_dc: 0.0,
            use_prior: true,
            ..ModelConfig::default()
        },
        steps: 10,
        batch_size: 2,
        learning_rate: 2e-3,
        seed: 0,
        mask_mode: MaskMode::FixedPerSample,
        pattern: ddmri_core::Pattern::Spiral,
        target_r: 3.0,
        loss_weights: (1.0, 1.0),
        checkpoint_every: 1000,
    };
    let t0 = std::time::Instant::now();
    let out = train(&cfg, &ds, &dir.join("run")).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "10 steps in {dt:.2}s => {:.3} s/step (loss {:.5} -> {:.5})",
        dt / 10.0,
        out.initial_loss,
        out.final_loss
    );
}
