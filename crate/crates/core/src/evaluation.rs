//! Reconstruction quality metrics and report generation.
//!
//! All metrics operate on magnitude images, normalized so the reference's
//! peak magnitude is 1. PSNR of a perfect reconstruction is capped at
//! 200 dB. SSIM uses the standard 11x11 Gaussian window (sigma 1.5) with
//! C1 = 0.01^2 and C2 = 0.03^2 on unit dynamic range, averaged over the
//! valid (fully windowed) region.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::model::{dudornet_forward, ModelConfig, ParamSet, MANIFEST_FILE};
use crate::phantom::{Dataset, Split};
use crate::sampling::{generate_mask, Pattern};
use crate::transforms::{apply_mask, zero_fill_recon};
use crate::Real;

/// PSNR reported when the error is exactly zero.
pub const PSNR_CAP_DB: f64 = 200.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn magnitudes_normalized<F: Real>(
    test: &ComplexField<F>,
    reference: &ComplexField<F>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if test.shape() != reference.shape() {
        return Err(Error::validation(format!(
            "shape mismatch: {:?} vs {:?}",
            test.shape(),
            reference.shape()
        )));
    }
    let refm = reference.magnitude();
    let peak = refm.iter().fold(0.0f64, |m, v| m.max(v.to_f64().unwrap()));
    if peak == 0.0 {
        return Err(Error::validation("reference image is identically zero"));
    }
    let a = test.magnitude().mapv(|v| v.to_f64().unwrap() / peak);
    let b = refm.mapv(|v| v.to_f64().unwrap() / peak);
    Ok((a, b))
}

/// Mean squared error between magnitude images in reference-normalized units.
pub fn mse<F: Real>(test: &ComplexField<F>, reference: &ComplexField<F>) -> Result<f64> {
    let (a, b) = magnitudes_normalized(test, reference)?;
    Ok(mse_arrays(&a, &b))
}

fn mse_arrays(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

/// Peak signal-to-noise ratio in dB under unit reference peak.
pub fn psnr<F: Real>(test: &ComplexField<F>, reference: &ComplexField<F>) -> Result<f64> {
    Ok(psnr_from_mse(mse(test, reference)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

fn gaussian_window() -> Array2<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut w = Array2::zeros((SSIM_WINDOW, SSIM_WINDOW));
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let dy = i as isize - half;
            let dx = j as isize - half;
            let r2 = (dy * dy + dx * dx) as f64;
            w[[i, j]] = (-r2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        }
    }
    let sum = w.sum();
    w / sum
}

/// Windowed local products filtered over the valid region.
fn filter_valid(x: &Array2<f64>, win: &Array2<f64>) -> Array2<f64> {
    let (h, w) = x.dim();
    let k = SSIM_WINDOW;
    let mut out = Array2::zeros((h - k + 1, w - k + 1));
    for i in 0..h - k + 1 {
        for j in 0..w - k + 1 {
            let mut acc = 0.0;
            for a in 0..k {
                for b in 0..k {
                    acc += win[[a, b]] * x[[i + a, j + b]];
                }
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Mean structural similarity between two magnitude images under a shared
/// normalization.
pub fn ssim<F: Real>(test: &ComplexField<F>, reference: &ComplexField<F>) -> Result<f64> {
    let (a, b) = magnitudes_normalized(test, reference)?;
    ssim_arrays(&a, &b)
}

pub fn ssim_arrays(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::validation(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let win = gaussian_window();
    let mu_a = filter_valid(a, &win);
    let mu_b = filter_valid(b, &win);
    let aa = filter_valid(&(a * a), &win);
    let bb = filter_valid(&(b * b), &win);
    let ab = filter_valid(&(a * b), &win);
    let mut total = 0.0;
    for ((i, j), &ma) in mu_a.indexed_iter() {
        let mb = mu_b[[i, j]];
        let va = aa[[i, j]] - ma * ma;
        let vb = bb[[i, j]] - mb * mb;
        let cab = ab[[i, j]] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cab + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// One evaluated reconstruction.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub sample_id: String,
    pub pattern: Pattern,
    pub target_r: f64,
    pub method: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub mse: f64,
}

/// Aggregate statistics for one (pattern, R, method) cell.
#[derive(Clone, Debug)]
pub struct Aggregate {
    pub pattern: Pattern,
    pub target_r: f64,
    pub method: String,
    pub n: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
}

#[derive(Clone, Debug)]
pub struct ReconReport {
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<Aggregate>,
    /// Hash of the training configuration and checkpoint manifest.
    pub fingerprint: String,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ReconReport {
    pub fn from_rows(rows: Vec<ReportRow>, fingerprint: String) -> Self {
        let mut groups: BTreeMap<(String, String, String), Vec<&ReportRow>> = BTreeMap::new();
        for row in &rows {
            groups
                .entry((
                    row.pattern.name().to_string(),
                    format!("{:.4}", row.target_r),
                    row.method.clone(),
                ))
                .or_default()
                .push(row);
        }
        let aggregates = groups
            .values()
            .map(|rows| {
                let (psnr_mean, psnr_std) =
                    mean_std(&rows.iter().map(|r| r.psnr_db).collect::<Vec<_>>());
                let (ssim_mean, ssim_std) =
                    mean_std(&rows.iter().map(|r| r.ssim).collect::<Vec<_>>());
                let (mse_mean, mse_std) = mean_std(&rows.iter().map(|r| r.mse).collect::<Vec<_>>());
                Aggregate {
                    pattern: rows[0].pattern,
                    target_r: rows[0].target_r,
                    method: rows[0].method.clone(),
                    n: rows.len(),
                    psnr_mean,
                    psnr_std,
                    ssim_mean,
                    ssim_std,
                    mse_mean,
                    mse_std,
                }
            })
            .collect();
        Self { rows, aggregates, fingerprint }
    }

    /// Tab-separated per-sample rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("sample_id\tpattern\ttarget_R\tmethod\tpsnr_db\tssim\tmse\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6e}",
                r.sample_id, r.pattern, r.target_r, r.method, r.psnr_db, r.ssim, r.mse
            );
        }
        out
    }

    /// Human-readable summary: metric x method per (pattern, R).
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "fingerprint: {}", self.fingerprint);
        let mut cells: BTreeMap<(String, String), Vec<&Aggregate>> = BTreeMap::new();
        for a in &self.aggregates {
            cells
                .entry((a.pattern.name().to_string(), format!("{:07.3}", a.target_r)))
                .or_default()
                .push(a);
        }
        for ((pattern, r), aggs) in cells {
            let _ = writeln!(out, "\n[{} R={}]  (n={})", pattern, r.trim_start_matches('0'), aggs[0].n);
            let _ = writeln!(out, "{:<12} {:>14} {:>14} {:>14}", "method", "PSNR[dB]", "SSIM", "MSE");
            for a in aggs {
                let _ = writeln!(
                    out,
                    "{:<12} {:>8.3}±{:<5.3} {:>8.4}±{:<5.4} {:>9.3e}",
                    a.method, a.psnr_mean, a.psnr_std, a.ssim_mean, a.ssim_std, a.mse_mean
                );
            }
        }
        out
    }
}

/// Fingerprint = SHA-256 over the training/evaluation configuration text and
/// the checkpoint manifest (which itself embeds per-parameter hashes).
pub fn config_fingerprint(config_text: &str, checkpoint_dir: Option<&Path>) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    if let Some(dir) = checkpoint_dir {
        hasher.update(std::fs::read(dir.join(MANIFEST_FILE))?);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Deterministic evaluation-mask seed for a (sample, pattern, R) triple.
pub fn eval_mask_seed(sample_id: &str, pattern: Pattern, target_r: f64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(sample_id.as_bytes());
    hasher.update(pattern.name().as_bytes());
    hasher.update(target_r.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Evaluate a checkpoint over a dataset split: for every sample, pattern and
/// acceleration, reconstruct with the model and with zero filling, and report
/// both side by side.
pub fn evaluate(
    checkpoint_dir: &Path,
    dataset: &Dataset,
    split: Split,
    patterns: &[Pattern],
    r_list: &[f64],
) -> Result<ReconReport> {
    let (params, cfg) = ParamSet::<f32>::load_checkpoint(checkpoint_dir)?;
    let fingerprint =
        config_fingerprint(&cfg.to_kv(), Some(checkpoint_dir))?;
    let rows = evaluate_with_params(&params, &cfg, dataset, split, patterns, r_list)?;
    Ok(ReconReport::from_rows(rows, fingerprint))
}

/// Evaluation core shared by the checkpoint path and in-memory callers.
pub fn evaluate_with_params(
    params: &ParamSet<f32>,
    cfg: &ModelConfig,
    dataset: &Dataset,
    split: Split,
    patterns: &[Pattern],
    r_list: &[f64],
) -> Result<Vec<ReportRow>> {
    let ids: Vec<String> = dataset.ids(split).map(str::to_string).collect();
    if ids.is_empty() {
        return Err(Error::validation(format!("split {split:?} is empty")));
    }
    let mut rows = Vec::new();
    for id in &ids {
        let sample = dataset.load_sample(id)?;
        for &pattern in patterns {
            for &target_r in r_list {
                let (h, w) = sample.x_full.shape();
                let seed = eval_mask_seed(id, pattern, target_r);
                let mask = generate_mask(pattern, h, w, target_r, seed)?;
                let k_u = apply_mask(&sample.k_full, &mask)?;
                let zp = zero_fill_recon(&k_u, &mask)?;
                let prior = cfg.use_prior.then_some(&sample.x_prior);
                let out = dudornet_forward(&k_u, &mask, prior, cfg, params)?;
                for (method, recon) in [("zp", &zp), ("model", &out.x_final)] {
                    let m = mse(recon, &sample.x_full)?;
                    rows.push(ReportRow {
                        sample_id: id.clone(),
                        pattern,
                        target_r,
                        method: method.to_string(),
                        psnr_db: psnr_from_mse(m),
                        ssim: ssim(recon, &sample.x_full)?,
                        mse: m,
                    });
                }
            }
        }
    }
    Ok(rows)
}
