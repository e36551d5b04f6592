//! Command-line tools: dataset generation, training, reconstruction,
//! evaluation, and plots.
//!
//! Exit codes: 0 success, 2 usage/configuration error, 3 training divergence,
//! 4 I/O or file-format error.

mod manifest;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use ddmri_core::dar::{save_array, DarArray};
use ddmri_core::evaluation::{self, evaluate};
use ddmri_core::model::{dudornet_forward, ParamSet};
use ddmri_core::phantom::{make_dataset, Dataset, PhantomSpec, Split};
use ddmri_core::sampling::generate_mask;
use ddmri_core::training::{ablation_row, train, TrainConfig};
use ddmri_core::transforms::{apply_mask, zero_fill_recon};
use ddmri_core::{Error as CoreError, Pattern};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "ddmri", version, about = "Dual-domain recurrent MRI reconstruction tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired-contrast dataset.
    MakeData(MakeDataArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Reconstruct one sample with a trained checkpoint.
    Reconstruct(ReconstructArgs),
    /// Evaluate a checkpoint over a split, patterns, and accelerations.
    Evaluate(EvaluateArgs),
    /// Render triptychs and metric-vs-R curves from an evaluation report.
    Plot(PlotArgs),
}

#[derive(Args)]
struct MakeDataArgs {
    #[arg(long = "n-train")]
    n_train: usize,
    #[arg(long = "n-val")]
    n_val: usize,
    #[arg(long = "n-test")]
    n_test: usize,
    /// Image side length (square grids).
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = false)]
    overwrite: bool,
    /// Shapes per phantom.
    #[arg(long = "n-shapes", default_value_t = 9)]
    n_shapes: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Key=value training configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ablation row letter A..H (component toggles).
    #[arg(long)]
    ablation: Option<char>,
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long = "R")]
    target_r: Option<f64>,
    #[arg(long = "n-rec")]
    n_rec: Option<usize>,
    #[arg(long = "no-prior", default_value_t = false)]
    no_prior: bool,
    #[arg(long = "no-dd", default_value_t = false)]
    no_dd: bool,
    #[arg(long = "no-dil", default_value_t = false)]
    no_dil: bool,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    /// fixed_per_sample or redraw_per_step.
    #[arg(long = "mask-mode")]
    mask_mode: Option<String>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "sample-id")]
    sample_id: String,
    #[arg(long, default_value = "radial")]
    pattern: String,
    #[arg(long = "R", default_value_t = 5.0)]
    target_r: f64,
    /// Mask seed; derived from (sample, pattern, R) when omitted.
    #[arg(long = "mask-seed")]
    mask_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Comma-separated patterns.
    #[arg(long, default_value = "cartesian,radial,spiral")]
    patterns: String,
    /// Comma-separated accelerations.
    #[arg(long = "R-list", default_value = "2,3,4,5,6")]
    r_list: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Output directory of a previous `evaluate` run.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::Validation(_) | CoreError::Config(_) | CoreError::Unsupported(_) => 2,
        CoreError::Divergence { .. } => 3,
        CoreError::Format(_) | CoreError::Io(_) => 4,
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MakeData(args) => cmd_make_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(core) = err.downcast_ref::<CoreError>() {
                fail(exit_code_for(core), core)
            } else if err.downcast_ref::<std::io::Error>().is_some() {
                fail(4, err)
            } else {
                fail(2, err)
            }
        }
    }
}

fn cmd_make_data(args: MakeDataArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut template = PhantomSpec::new(args.size, args.size, args.seed);
    template.n_shapes = args.n_shapes;
    let ds = make_dataset(args.n_train, args.n_val, args.n_test, &template, &args.out, args.overwrite)?;
    println!(
        "wrote {} samples ({} train / {} val / {} test) to {}",
        ds.rows().len(),
        args.n_train,
        args.n_val,
        args.n_test,
        args.out.display()
    );
    RunManifest::new("make-data", args.seed)
        .config(format!(
            "n_train={} n_val={} n_test={} size={} n_shapes={} overwrite={}",
            args.n_train, args.n_val, args.n_test, args.size, args.n_shapes, args.overwrite
        ))
        .output(&args.out)
        .finish(started, &args.out)?;
    Ok(())
}

fn resolve_train_config(args: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::from_kv(&std::fs::read_to_string(path)?)?,
        None => TrainConfig::default(),
    };
    if let Some(letter) = args.ablation {
        cfg = ablation_row(&cfg, letter.to_ascii_uppercase())?;
    }
    if let Some(p) = &args.pattern {
        cfg.pattern = Pattern::parse(p)?;
    }
    if let Some(r) = args.target_r {
        cfg.target_r = r;
    }
    if let Some(n) = args.n_rec {
        cfg.model.n_rec = n;
    }
    if args.no_prior {
        cfg.model.use_prior = false;
    }
    if args.no_dd {
        cfg.model.use_dual_domain = false;
    }
    if args.no_dil {
        cfg.model.use_dilation = false;
    }
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = args.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(m) = &args.mask_mode {
        cfg.mask_mode = ddmri_core::training::MaskMode::parse(m)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let cfg = resolve_train_config(&args)?;
    let dataset = Dataset::load(&args.data)?;
    let outcome = train(&cfg, &dataset, &args.out)?;
    println!(
        "trained {} steps: loss {:.6} -> {:.6} ({} skipped), checkpoint at {}",
        cfg.steps,
        outcome.initial_loss,
        outcome.final_loss,
        outcome.skipped_steps,
        outcome.final_checkpoint.display()
    );
    RunManifest::new("train", cfg.seed)
        .config(cfg.to_kv())
        .input(&args.data)
        .output(&outcome.final_checkpoint)
        .finish(started, &args.out)?;
    Ok(())
}

fn cmd_reconstruct(args: ReconstructArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let pattern = Pattern::parse(&args.pattern)?;
    let (params, model_cfg) = ParamSet::<f32>::load_checkpoint(&args.checkpoint)?;
    let dataset = Dataset::load(&args.data)?;
    let sample = dataset.load_sample(&args.sample_id)?;
    let (h, w) = sample.x_full.shape();
    let seed = args
        .mask_seed
        .unwrap_or_else(|| evaluation::eval_mask_seed(&args.sample_id, pattern, args.target_r));
    let mask = generate_mask(pattern, h, w, args.target_r, seed)?;
    let k_u = apply_mask(&sample.k_full, &mask)?;
    let prior = model_cfg.use_prior.then_some(&sample.x_prior);
    let out = dudornet_forward(&k_u, &mask, prior, &model_cfg, &params)?;

    std::fs::create_dir_all(&args.out)?;
    let base = format!("{}_{}_R{}", args.sample_id, pattern, args.target_r);
    save_array(
        args.out.join(format!("{base}.dar")),
        &DarArray::C64(out.x_final.data().clone().into_dyn()),
    )?;
    plot::save_gray(
        &plot::magnitude_png(&out.x_final),
        &args.out.join(format!("{base}.png")),
    )?;
    let zp = zero_fill_recon(&k_u, &mask)?;
    let psnr = evaluation::psnr(&out.x_final, &sample.x_full)?;
    let ssim = evaluation::ssim(&out.x_final, &sample.x_full)?;
    let zp_ssim = evaluation::ssim(&zp, &sample.x_full)?;
    println!(
        "{base}: model PSNR {psnr:.2} dB, SSIM {ssim:.4} (zero-filled SSIM {zp_ssim:.4}), achieved R {:.3}",
        mask.achieved_r()
    );
    RunManifest::new("reconstruct", seed)
        .config(format!(
            "sample={} pattern={pattern} R={} checkpoint={}",
            args.sample_id,
            args.target_r,
            args.checkpoint.display()
        ))
        .input(&args.data)
        .input(&args.checkpoint)
        .output(&args.out)
        .finish(started, &args.out)?;
    Ok(())
}

fn parse_patterns(text: &str) -> anyhow::Result<Vec<Pattern>> {
    text.split(',')
        .map(|p| Pattern::parse(p.trim()).map_err(Into::into))
        .collect()
}

fn parse_r_list(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad R value: {e}")))
        .collect()
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let split = Split::parse(&args.split)?;
    let patterns = parse_patterns(&args.patterns)?;
    let r_list = parse_r_list(&args.r_list)?;
    let dataset = Dataset::load(&args.data)?;
    let report = evaluate(&args.checkpoint, &dataset, split, &patterns, &r_list)?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.tsv"), report.to_tsv())?;
    std::fs::write(args.out.join("summary.txt"), report.summary())?;
    save_recons(&args, &dataset, split, &patterns, &r_list)?;
    println!("{}", report.summary());
    RunManifest::new("evaluate", 0)
        .config(format!(
            "split={} patterns={} R_list={} checkpoint={} data={}",
            args.split,
            args.patterns,
            args.r_list,
            args.checkpoint.display(),
            args.data.display()
        ))
        .input(&args.data)
        .input(&args.checkpoint)
        .output(&args.out)
        .finish(started, &args.out)?;
    Ok(())
}

/// Write per-(sample, pattern, R) model reconstructions for later plotting.
fn save_recons(
    args: &EvaluateArgs,
    dataset: &Dataset,
    split: Split,
    patterns: &[Pattern],
    r_list: &[f64],
) -> anyhow::Result<()> {
    let (params, model_cfg) = ParamSet::<f32>::load_checkpoint(&args.checkpoint)?;
    let dir = args.out.join("recons");
    std::fs::create_dir_all(&dir)?;
    for id in dataset.ids(split) {
        let sample = dataset.load_sample(id)?;
        let (h, w) = sample.x_full.shape();
        for &pattern in patterns {
            for &r in r_list {
                let seed = evaluation::eval_mask_seed(id, pattern, r);
                let mask = generate_mask(pattern, h, w, r, seed)?;
                let k_u = apply_mask(&sample.k_full, &mask)?;
                let prior = model_cfg.use_prior.then_some(&sample.x_prior);
                let out = dudornet_forward(&k_u, &mask, prior, &model_cfg, &params)?;
                save_array(
                    dir.join(format!("{id}_{pattern}_R{r}.dar")),
                    &DarArray::C64(out.x_final.data().clone().into_dyn()),
                )?;
            }
        }
    }
    Ok(())
}

const DIFF_AMPLIFY: f32 = 5.0;

fn cmd_plot(args: PlotArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let report_tsv = std::fs::read_to_string(args.report.join("report.tsv"))?;
    let run: RunManifest = RunManifest::read(&args.report)?;
    let data_dir = run
        .inputs
        .iter()
        .map(Path::new)
        .find(|p| p.join("manifest.txt").exists())
        .ok_or_else(|| anyhow::anyhow!("evaluation manifest does not reference a dataset"))?;
    let dataset = Dataset::load(data_dir)?;

    std::fs::create_dir_all(&args.out)?;
    let rows = parse_report(&report_tsv)?;

    // per-sample triptychs for model rows
    let mut triptychs = 0usize;
    for row in rows.iter().filter(|r| r.method == "model") {
        let recon_path = args
            .report
            .join("recons")
            .join(format!("{}_{}_R{}.dar", row.sample_id, row.pattern, row.target_r));
        if !recon_path.exists() {
            continue;
        }
        let recon = load_complex_field(&recon_path)?;
        let sample = dataset.load_sample(&row.sample_id)?;
        let img = plot::triptych_png(&sample.x_full, &recon, DIFF_AMPLIFY)?;
        let name = format!(
            "{}_{}_R{}_triptych_diffx{}.png",
            row.sample_id, row.pattern, row.target_r, DIFF_AMPLIFY as u32
        );
        plot::save_gray(&img, &args.out.join(name))?;
        triptychs += 1;
    }

    // metric-vs-R curves per (pattern, method)
    for (metric, file, pick) in [
        ("ssim", "ssim_vs_r.png", 0usize),
        ("psnr", "psnr_vs_r.png", 1usize),
    ] {
        let mut groups: std::collections::BTreeMap<(String, String), Vec<(f64, f64)>> =
            std::collections::BTreeMap::new();
        for row in &rows {
            let v = if pick == 0 { row.ssim } else { row.psnr_db };
            groups
                .entry((row.pattern.to_string(), row.method.clone()))
                .or_default()
                .push((row.target_r, v));
        }
        let mut curves = Vec::new();
        for (ci, ((pattern, method), mut pts)) in groups.into_iter().enumerate() {
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            // average rows sharing one R
            let mut averaged: Vec<(f64, f64, usize)> = Vec::new();
            for (r, v) in pts {
                match averaged.last_mut() {
                    Some((lr, lv, n)) if *lr == r => {
                        *lv += v;
                        *n += 1;
                    }
                    _ => averaged.push((r, v, 1)),
                }
            }
            curves.push(plot::Curve {
                label: format!("{pattern} {method}"),
                points: averaged.into_iter().map(|(r, v, n)| (r, v / n as f64)).collect(),
                color: plot::CURVE_COLORS[ci % plot::CURVE_COLORS.len()],
            });
        }
        let img = plot::curves_png(metric, metric, &curves)?;
        plot::save_rgb(&img, &args.out.join(file))?;
    }

    println!("wrote {triptychs} triptychs and 2 curve images to {}", args.out.display());
    RunManifest::new("plot", 0)
        .config(format!("report={}", args.report.display()))
        .input(&args.report)
        .output(&args.out)
        .finish(started, &args.out)?;
    Ok(())
}

struct ReportLine {
    sample_id: String,
    pattern: Pattern,
    target_r: f64,
    method: String,
    psnr_db: f64,
    ssim: f64,
}

fn parse_report(tsv: &str) -> anyhow::Result<Vec<ReportLine>> {
    let mut rows = Vec::new();
    for line in tsv.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        anyhow::ensure!(f.len() == 7, "malformed report row: {line}");
        rows.push(ReportLine {
            sample_id: f[0].to_string(),
            pattern: Pattern::parse(f[1])?,
            target_r: f[2].parse()?,
            method: f[3].to_string(),
            psnr_db: f[4].parse()?,
            ssim: f[5].parse()?,
        });
    }
    Ok(rows)
}

fn load_complex_field(path: &Path) -> anyhow::Result<ddmri_core::ComplexField<f32>> {
    match ddmri_core::dar::load_array(path)? {
        DarArray::C64(a) => {
            let a2 = a
                .into_dimensionality::<ndarray::Ix2>()
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            Ok(ddmri_core::ComplexField::new(a2, ddmri_core::Domain::Image)?)
        }
        _ => anyhow::bail!("{} is not a complex64 field", path.display()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_parsing_round_trips() {
        let tsv = "sample_id\tpattern\ttarget_R\tmethod\tpsnr_db\tssim\tmse\n\
                   a\tradial\t4\tmodel\t31.5\t0.93\t7.0e-4\n";
        let rows = parse_report(tsv).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sample_id, "a");
        assert_eq!(rows[0].pattern, Pattern::Radial);
        assert_eq!(rows[0].method, "model");
    }
}
