//! Deep-supervised dual-domain training: loss, optimizer loop, checkpoints,
//! and the ablation grid.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evaluation::ssim;
use crate::field::ComplexField;
use crate::model::{
    build_forward, dudornet_forward, init_params, BatchInputs, BlockOutputs, BoundParams,
    ModelConfig, ParamSet,
};
use crate::phantom::{Dataset, Sample, Split};
use crate::sampling::{generate_mask, Pattern, SamplingMask};
use crate::transforms::apply_mask;
use crate::Real;

pub const TRAIN_CONFIG_FILE: &str = "train_config.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    /// One mask per sample, fixed for the whole run.
    FixedPerSample,
    /// A fresh mask for every (step, sample) pair.
    RedrawPerStep,
}

impl MaskMode {
    pub fn name(&self) -> &'static str {
        match self {
            MaskMode::FixedPerSample => "fixed_per_sample",
            MaskMode::RedrawPerStep => "redraw_per_step",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fixed_per_sample" => Ok(MaskMode::FixedPerSample),
            "redraw_per_step" => Ok(MaskMode::RedrawPerStep),
            other => Err(Error::config(format!("unknown mask mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mask_mode: MaskMode,
    pub pattern: Pattern,
    pub target_r: f64,
    /// (w_image, w_kspace).
    pub loss_weights: (f64, f64),
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            steps: 1000,
            batch_size: 2,
            learning_rate: 1e-4,
            seed: 0,
            mask_mode: MaskMode::RedrawPerStep,
            pattern: Pattern::Radial,
            target_r: 5.0,
            loss_weights: (1.0, 1.0),
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate must be non-negative"));
        }
        if self.loss_weights.0 < 0.0 || self.loss_weights.1 < 0.0 {
            return Err(Error::config("loss weights must be non-negative"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint_every must be at least 1"));
        }
        if !(1.0..=16.0).contains(&self.target_r) {
            return Err(Error::config(format!(
                "target_R must be in [1, 16], got {}",
                self.target_r
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "steps={}", self.steps);
        let _ = writeln!(out, "batch_size={}", self.batch_size);
        let _ = writeln!(out, "learning_rate={}", self.learning_rate);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "mask_mode={}", self.mask_mode.name());
        let _ = writeln!(out, "pattern={}", self.pattern);
        let _ = writeln!(out, "target_r={}", self.target_r);
        let _ = writeln!(out, "w_image={}", self.loss_weights.0);
        let _ = writeln!(out, "w_kspace={}", self.loss_weights.1);
        let _ = writeln!(out, "checkpoint_every={}", self.checkpoint_every);
        for line in self.model.to_kv().lines() {
            let _ = writeln!(out, "model.{line}");
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut model_lines = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("model.") {
                model_lines.push_str(rest);
                model_lines.push('\n');
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: expected key=value", lineno + 1)))?;
            let value = value.trim();
            match key.trim() {
                "steps" => cfg.steps = value.parse().map_err(|e| Error::format(format!("steps: {e}")))?,
                "batch_size" => {
                    cfg.batch_size =
                        value.parse().map_err(|e| Error::format(format!("batch_size: {e}")))?
                }
                "learning_rate" => {
                    cfg.learning_rate =
                        value.parse().map_err(|e| Error::format(format!("learning_rate: {e}")))?
                }
                "seed" => cfg.seed = value.parse().map_err(|e| Error::format(format!("seed: {e}")))?,
                "mask_mode" => cfg.mask_mode = MaskMode::parse(value)?,
                "pattern" => cfg.pattern = Pattern::parse(value)?,
                "target_r" => {
                    cfg.target_r =
                        value.parse().map_err(|e| Error::format(format!("target_r: {e}")))?
                }
                "w_image" => {
                    cfg.loss_weights.0 =
                        value.parse().map_err(|e| Error::format(format!("w_image: {e}")))?
                }
                "w_kspace" => {
                    cfg.loss_weights.1 =
                        value.parse().map_err(|e| Error::format(format!("w_kspace: {e}")))?
                }
                "checkpoint_every" => {
                    cfg.checkpoint_every =
                        value.parse().map_err(|e| Error::format(format!("checkpoint_every: {e}")))?
                }
                other => return Err(Error::format(format!("unknown train key '{other}'"))),
            }
        }
        if !model_lines.is_empty() {
            cfg.model = ModelConfig::from_kv(&model_lines)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn mse_fields<F: Real>(a: &ComplexField<F>, b: &ComplexField<F>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::validation("loss field shapes differ"));
    }
    let n = (2 * a.data().len()) as f64;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y).norm_sqr().to_f64().unwrap())
        .sum();
    Ok(sum / n)
}

/// Deep-supervised loss over recorded block outputs: the image term compares
/// each block's restoration to the full image, the k-space term compares each
/// block's consistent k-space to the full k-space (in orthonormal transform
/// units, which Parseval keeps commensurate with the image term). K-space
/// terms are dropped when the model is image-only.
pub fn total_loss<F: Real>(
    outputs: &BlockOutputs<F>,
    x_f: &ComplexField<F>,
    k_f: &ComplexField<F>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (w_image, w_kspace) = cfg.loss_weights;
    let mut total = 0.0;
    for x_hat in &outputs.x_blocks {
        total += w_image * mse_fields(x_hat, x_f)?;
    }
    if cfg.model.use_dual_domain {
        for k_hat in &outputs.k_blocks {
            total += w_kspace * mse_fields(k_hat, k_f)?;
        }
    }
    Ok(total)
}

/// Adaptive-moment optimizer state.
struct Adam<F> {
    m: Vec<Array4<F>>,
    v: Vec<Array4<F>>,
    t: usize,
}

impl<F: Real> Adam<F> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &ParamSet<F>) -> Self {
        Self {
            m: params.values().iter().map(|p| Array4::zeros(p.dim())).collect(),
            v: params.values().iter().map(|p| Array4::zeros(p.dim())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ParamSet<F>, grads: &[Array4<F>], lr: f64) {
        self.t += 1;
        let b1 = F::from_f64(Self::BETA1).unwrap();
        let b2 = F::from_f64(Self::BETA2).unwrap();
        let one = F::one();
        let bc1 = F::from_f64(1.0 - Self::BETA1.powi(self.t as i32)).unwrap();
        let bc2 = F::from_f64(1.0 - Self::BETA2.powi(self.t as i32)).unwrap();
        let lr = F::from_f64(lr).unwrap();
        let eps = F::from_f64(Self::EPS).unwrap();
        for ((p, g), (m, v)) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| *m = b1 * *m + (one - b1) * g);
            ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| *v = b2 * *v + (one - b2) * g * g);
            ndarray::Zip::from(&mut *p)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *p = *p - lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}

#[derive(Clone, Debug)]
pub struct LossRow {
    pub step: usize,
    pub loss: f64,
    pub val_ssim: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub loss_curve: Vec<LossRow>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub skipped_steps: usize,
}

fn mask_seed(base: u64, step: usize, idx: usize) -> u64 {
    // splitmix-style mixing keeps per-(step, sample) masks decorrelated
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(step as u64 + 1))
        .wrapping_add(0xbf58476d1ce4e5b9u64.wrapping_mul(idx as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn to_two_channel<F: Real>(field: &ComplexField<F>, n: usize, slot: usize, out: &mut Array4<F>) {
    for ((y, z), v) in field.data().indexed_iter() {
        out[[slot, 0, y, z]] = v.re;
        out[[slot, 1, y, z]] = v.im;
    }
    debug_assert!(slot < n);
}

/// Mean model SSIM over a split with deterministic per-sample masks.
pub fn validation_ssim(
    params: &ParamSet<f32>,
    cfg: &TrainConfig,
    dataset: &Dataset,
    split: Split,
) -> Result<f64> {
    let ids: Vec<String> = dataset.ids(split).map(str::to_string).collect();
    if ids.is_empty() {
        return Err(Error::validation("validation split is empty"));
    }
    let mut total = 0.0;
    for id in &ids {
        let sample = dataset.load_sample(id)?;
        let (h, w) = sample.x_full.shape();
        let seed = crate::evaluation::eval_mask_seed(id, cfg.pattern, cfg.target_r);
        let mask = generate_mask(cfg.pattern, h, w, cfg.target_r, seed)?;
        let k_u = apply_mask(&sample.k_full, &mask)?;
        let prior = cfg.model.use_prior.then_some(&sample.x_prior);
        let out = dudornet_forward(&k_u, &mask, prior, &cfg.model, params)?;
        total += ssim(&out.x_final, &sample.x_full)?;
    }
    Ok(total / ids.len() as f64)
}

/// Gradient-based minimization of the deep-supervised loss. Deterministic
/// given the seed: data order, mask draws, and initialization all derive from
/// it, and reductions run in fixed order.
pub fn train(cfg: &TrainConfig, dataset: &Dataset, out_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(TRAIN_CONFIG_FILE), cfg.to_kv())?;

    let train_ids: Vec<String> = dataset.ids(Split::Train).map(str::to_string).collect();
    if train_ids.is_empty() {
        return Err(Error::validation("training split is empty"));
    }
    let samples: Vec<Sample<f32>> = train_ids
        .iter()
        .map(|id| dataset.load_sample(id))
        .collect::<Result<_>>()?;
    let (h, w) = samples[0].x_full.shape();

    let fixed_masks: Vec<SamplingMask> = match cfg.mask_mode {
        MaskMode::FixedPerSample => samples
            .iter()
            .enumerate()
            .map(|(i, _)| generate_mask(cfg.pattern, h, w, cfg.target_r, mask_seed(cfg.seed, 0, i)))
            .collect::<Result<_>>()?,
        MaskMode::RedrawPerStep => Vec::new(),
    };

    let mut params: ParamSet<f32> = init_params(&cfg.model, cfg.seed, true)?;
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = Vec::new();
    let has_val = dataset.len_of(Split::Val) > 0;

    let mut loss_curve: Vec<LossRow> = Vec::with_capacity(cfg.steps);
    let mut skipped = 0usize;
    let mut consecutive_bad = 0usize;
    let mut initial_loss = f64::NAN;
    let save_checkpoint = |params: &ParamSet<f32>, name: &str| -> Result<PathBuf> {
        let dir = out_dir.join(name);
        params.save_checkpoint(&dir, &cfg.model)?;
        std::fs::write(dir.join(TRAIN_CONFIG_FILE), cfg.to_kv())?;
        Ok(dir)
    };

    for step in 1..=cfg.steps {
        // deterministic shuffled order, replenished per epoch
        let mut batch_ids = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if order.is_empty() {
                order = (0..samples.len()).collect();
                order.shuffle(&mut rng);
            }
            batch_ids.push(order.pop().unwrap());
        }

        let masks: Vec<SamplingMask> = match cfg.mask_mode {
            MaskMode::FixedPerSample => {
                batch_ids.iter().map(|&i| fixed_masks[i].clone()).collect()
            }
            MaskMode::RedrawPerStep => batch_ids
                .iter()
                .map(|&i| generate_mask(cfg.pattern, h, w, cfg.target_r, mask_seed(cfg.seed, step, i)))
                .collect::<Result<_>>()?,
        };

        let n = batch_ids.len();
        let k_u_fields: Vec<ComplexField<f32>> = batch_ids
            .iter()
            .zip(&masks)
            .map(|(&i, m)| apply_mask(&samples[i].k_full, m))
            .collect::<Result<_>>()?;
        let priors: Option<Vec<ComplexField<f32>>> = cfg
            .model
            .use_prior
            .then(|| batch_ids.iter().map(|&i| samples[i].x_prior.clone()).collect());
        let mask_refs: Vec<&SamplingMask> = masks.iter().collect();
        let inputs = BatchInputs::new(&k_u_fields, &mask_refs, priors.as_deref())?;

        let mut x_f = Array4::<f32>::zeros((n, 2, h, w));
        let mut k_f = Array4::<f32>::zeros((n, 2, h, w));
        for (slot, &i) in batch_ids.iter().enumerate() {
            to_two_channel(&samples[i].x_full, n, slot, &mut x_f);
            to_two_channel(&samples[i].k_full, n, slot, &mut k_f);
        }

        let mut g = crate::autodiff::Graph::<f32>::new();
        let bound = BoundParams::bind(&mut g, &params, true);
        let nodes = build_forward(&mut g, &bound, &cfg.model, &inputs)?;
        let mut terms = Vec::new();
        let w_image = cfg.loss_weights.0 as f32;
        let w_kspace = cfg.loss_weights.1 as f32;
        for &x_hat in &nodes.x_blocks {
            let l = g.mse(x_hat, x_f.clone());
            terms.push((l, w_image));
        }
        if cfg.model.use_dual_domain {
            for &k_hat in &nodes.k_blocks {
                let l = g.mse(k_hat, k_f.clone());
                terms.push((l, w_kspace));
            }
        }
        let root = g.sum_scalars(&terms);
        let loss = g.scalar(root) as f64;
        if initial_loss.is_nan() {
            initial_loss = loss;
        }

        if !loss.is_finite() {
            consecutive_bad += 1;
            skipped += 1;
            if consecutive_bad > 50 {
                let dump = out_dir.join("divergence_dump.txt");
                let mut text = format!("diverged at step {step}\nlast losses:\n");
                for row in loss_curve.iter().rev().take(60) {
                    let _ = writeln!(text, "{}\t{}", row.step, row.loss);
                }
                std::fs::write(&dump, text)?;
                return Err(Error::Divergence { step, dump });
            }
            loss_curve.push(LossRow { step, loss, val_ssim: None });
            continue;
        }
        consecutive_bad = 0;

        let grads_by_node = g.backward(root)?;
        let grads = bound.collect_grads(&params, &grads_by_node);
        let finite = grads.iter().all(|g| g.iter().all(|v| v.is_finite()));
        if finite {
            adam.step(&mut params, &grads, cfg.learning_rate);
        } else {
            skipped += 1;
        }

        let val_ssim = if has_val && (step % cfg.checkpoint_every == 0 || step == cfg.steps) {
            Some(validation_ssim(&params, cfg, dataset, Split::Val)?)
        } else {
            None
        };
        loss_curve.push(LossRow { step, loss, val_ssim });

        if step % cfg.checkpoint_every == 0 && step != cfg.steps {
            save_checkpoint(&params, &format!("checkpoint_step{step:06}"))?;
        }
    }

    let final_checkpoint = save_checkpoint(&params, "checkpoint_final")?;
    let mut curve_text = String::from("step\tloss\tval_ssim\n");
    for row in &loss_curve {
        let val = row.val_ssim.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(curve_text, "{}\t{:.8}\t{}", row.step, row.loss, val);
    }
    std::fs::write(out_dir.join("loss_curve.tsv"), curve_text)?;

    let final_loss = loss_curve.last().map(|r| r.loss).unwrap_or(initial_loss);
    Ok(TrainOutcome {
        final_checkpoint,
        loss_curve,
        initial_loss: if initial_loss.is_nan() { 0.0 } else { initial_loss },
        final_loss,
        skipped_steps: skipped,
    })
}

/// One labeled configuration in the ablation grid.
#[derive(Clone, Debug)]
pub struct AblationRun {
    /// Row letter A..H, or "nrec{k}" for the recurrence sweep.
    pub tag: String,
    pub name: String,
    pub cfg: TrainConfig,
}

/// Component toggles for ablation row letters A..H.
pub fn ablation_row(base: &TrainConfig, letter: char) -> Result<TrainConfig> {
    let (rec, dd, dil) = match letter {
        'A' => (false, false, false),
        'B' => (true, false, false),
        'C' => (false, true, false),
        'D' => (false, false, true),
        'E' => (true, true, false),
        'F' => (true, false, true),
        'G' => (false, true, true),
        'H' => (true, true, true),
        other => return Err(Error::config(format!("ablation row must be A..H, got '{other}'"))),
    };
    let mut cfg = base.clone();
    cfg.model.n_rec = if rec { base.model.n_rec } else { 1 };
    cfg.model.use_dual_domain = dd;
    cfg.model.use_dilation = dil;
    // component analysis runs without the prior
    cfg.model.use_prior = false;
    Ok(cfg)
}

/// The eight single/combined component rows plus an n_rec in 1..=5 sweep.
pub fn ablation_grid(base: &TrainConfig) -> Vec<AblationRun> {
    let names = [
        ('A', "baseline"),
        ('B', "rec"),
        ('C', "dd"),
        ('D', "dil"),
        ('E', "rec-dd"),
        ('F', "rec-dil"),
        ('G', "dd-dil"),
        ('H', "rec-dd-dil"),
    ];
    let mut runs: Vec<AblationRun> = names
        .iter()
        .map(|&(letter, name)| AblationRun {
            tag: letter.to_string(),
            name: name.to_string(),
            cfg: ablation_row(base, letter).expect("static letters"),
        })
        .collect();
    for n_rec in 1..=5usize {
        let mut cfg = base.clone();
        cfg.model.n_rec = n_rec;
        cfg.model.use_dual_domain = true;
        cfg.model.use_dilation = true;
        runs.push(AblationRun {
            tag: format!("nrec{n_rec}"),
            name: format!("recurrence sweep n_rec={n_rec}"),
            cfg,
        });
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Domain;
    use crate::phantom::{make_dataset, PhantomSpec};
    use crate::transforms::fft2c;
    use ndarray::Array2;

    fn toy_train_cfg() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                n_rec: 1,
                n_sdrdb: 1,
                base_channels: 8,
                growth_channels: 4,
                se_reduction: 4,
                use_prior: false,
                ..ModelConfig::default()
            },
            steps: 3,
            batch_size: 2,
            learning_rate: 1e-3,
            seed: 1,
            mask_mode: MaskMode::FixedPerSample,
            pattern: Pattern::Cartesian,
            target_r: 2.0,
            loss_weights: (1.0, 1.0),
            checkpoint_every: 10,
        }
    }

    fn tiny_dataset(dir: &Path) -> Dataset {
        let template = PhantomSpec::new(32, 32, 3);
        make_dataset(4, 1, 1, &template, dir, false).unwrap()
    }

    #[test]
    fn config_kv_round_trip() {
        let mut cfg = toy_train_cfg();
        cfg.mask_mode = MaskMode::RedrawPerStep;
        cfg.loss_weights = (0.5, 2.0);
        let back = TrainConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back.steps, cfg.steps);
        assert_eq!(back.mask_mode, cfg.mask_mode);
        assert_eq!(back.loss_weights, cfg.loss_weights);
        assert_eq!(back.model, cfg.model);
    }

    #[test]
    fn total_loss_zero_for_perfect_outputs_and_additive() {
        let cfg = toy_train_cfg();
        let data = Array2::from_shape_fn((16, 16), |(i, j)| {
            num_complex::Complex::new((i + j) as f32 / 32.0, (i as f32 - j as f32) / 32.0)
        });
        let x_f = ComplexField::new(data, Domain::Image).unwrap();
        let k_f = fft2c(&x_f).unwrap();
        let perfect = BlockOutputs {
            x_blocks: vec![x_f.clone(), x_f.clone()],
            k_blocks: vec![k_f.clone(), k_f.clone()],
            x_final: x_f.clone(),
        };
        assert_eq!(total_loss(&perfect, &x_f, &k_f, &cfg).unwrap(), 0.0);

        // additivity across blocks
        let shifted = ComplexField::new(
            x_f.data().mapv(|v| v + num_complex::Complex::new(0.1, 0.0)),
            Domain::Image,
        )
        .unwrap();
        let single = BlockOutputs {
            x_blocks: vec![shifted.clone()],
            k_blocks: vec![k_f.clone()],
            x_final: shifted.clone(),
        };
        let double = BlockOutputs {
            x_blocks: vec![shifted.clone(), shifted.clone()],
            k_blocks: vec![k_f.clone(), k_f.clone()],
            x_final: shifted,
        };
        let a = total_loss(&single, &x_f, &k_f, &cfg).unwrap();
        let b = total_loss(&double, &x_f, &k_f, &cfg).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);

        // zero k-space weight leaves the image-only sum
        let mut cfg_imgonly = cfg.clone();
        cfg_imgonly.loss_weights = (1.0, 0.0);
        let c = total_loss(&double, &x_f, &k_f, &cfg_imgonly).unwrap();
        let mut cfg_kspace_off = cfg.clone();
        cfg_kspace_off.model.use_dual_domain = false;
        let d = total_loss(&double, &x_f, &k_f, &cfg_kspace_off).unwrap();
        assert!((c - d).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(&dir.path().join("data"));
        let mut cfg = toy_train_cfg();
        cfg.learning_rate = 0.0;
        cfg.steps = 2;
        let out = train(&cfg, &ds, &dir.path().join("run")).unwrap();
        let (params, _) = ParamSet::<f32>::load_checkpoint(&out.final_checkpoint).unwrap();
        let init: ParamSet<f32> = init_params(&cfg.model, cfg.seed, true).unwrap();
        for (a, b) in params.values().iter().zip(init.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn training_is_deterministic_and_decreases_loss() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(&dir.path().join("data"));
        let mut cfg = toy_train_cfg();
        cfg.steps = 12;
        cfg.learning_rate = 2e-3;
        let o1 = train(&cfg, &ds, &dir.path().join("a")).unwrap();
        let o2 = train(&cfg, &ds, &dir.path().join("b")).unwrap();
        let c1: Vec<f64> = o1.loss_curve.iter().map(|r| r.loss).collect();
        let c2: Vec<f64> = o2.loss_curve.iter().map(|r| r.loss).collect();
        assert_eq!(c1, c2);
        assert!(o1.final_loss < o1.initial_loss, "{} vs {}", o1.final_loss, o1.initial_loss);
        assert_eq!(o1.skipped_steps, 0);
    }

    #[test]
    fn single_small_step_decreases_loss_on_fixed_batch() {
        // lr = 1e-6 on a fixed batch: one optimizer step must not increase loss
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(&dir.path().join("data"));
        let mut cfg = toy_train_cfg();
        cfg.steps = 2;
        cfg.batch_size = 4; // whole training split: both steps see the same batch
        cfg.learning_rate = 1e-6;
        let out = train(&cfg, &ds, &dir.path().join("run")).unwrap();
        assert!(
            out.loss_curve[1].loss < out.loss_curve[0].loss,
            "loss went {} -> {}",
            out.loss_curve[0].loss,
            out.loss_curve[1].loss
        );
    }

    #[test]
    fn checkpoint_round_trip_preserves_forward_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(&dir.path().join("data"));
        let cfg = toy_train_cfg();
        let out = train(&cfg, &ds, &dir.path().join("run")).unwrap();
        let (params, model_cfg) = ParamSet::<f32>::load_checkpoint(&out.final_checkpoint).unwrap();

        let sample = ds.load_sample("test_0000").unwrap();
        let mask = generate_mask(Pattern::Cartesian, 32, 32, 2.0, 9).unwrap();
        let k_u = apply_mask(&sample.k_full, &mask).unwrap();
        let a = dudornet_forward(&k_u, &mask, None, &model_cfg, &params).unwrap();
        let (params2, _) = ParamSet::<f32>::load_checkpoint(&out.final_checkpoint).unwrap();
        let b = dudornet_forward(&k_u, &mask, None, &model_cfg, &params2).unwrap();
        assert_eq!(a.x_final.data(), b.x_final.data());
    }

    #[test]
    fn ablation_grid_matches_row_definitions() {
        let base = TrainConfig { model: ModelConfig { n_rec: 5, ..ModelConfig::default() }, ..toy_train_cfg() };
        let grid = ablation_grid(&base);
        assert_eq!(grid.len(), 13);
        let a = &grid[0];
        assert_eq!(a.tag, "A");
        assert_eq!(a.cfg.model.n_rec, 1);
        assert!(!a.cfg.model.use_dual_domain);
        assert!(!a.cfg.model.use_dilation);
        let h = &grid[7];
        assert_eq!(h.tag, "H");
        assert_eq!(h.cfg.model.n_rec, 5);
        assert!(h.cfg.model.use_dual_domain);
        assert!(h.cfg.model.use_dilation);
        assert!(!h.cfg.model.use_prior);
        let sweep: Vec<usize> = grid[8..].iter().map(|r| r.cfg.model.n_rec).collect();
        assert_eq!(sweep, vec![1, 2, 3, 4, 5]);
    }
}
