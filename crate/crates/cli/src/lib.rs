//! Command-line front end. [`dispatch`] runs one invocation and returns its
//! exit status: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use softcp_core::config::DEFAULT_CONFIG_TOML;
use softcp_core::dataset::{build_lesion_bank, scan_dataset};
use softcp_core::manifest::validate_manifest;
use softcp_core::metrics::evaluate_dirs;
use softcp_core::pipeline::{prepare, render_preview, synthesize_batch, BatchOptions};
use softcp_core::raster::{save_binary_mask, save_image, BitDepth};
use softcp_core::{BlendMode, ClassConfig, Ratio, RunConfig};

#[derive(Parser)]
#[command(name = "softcp", version, about = "Soft copy-paste augmentation for lesion segmentation datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic batch with its manifest.
    Augment(AugmentArgs),
    /// Write every lesion in the bank as patch/mask PNG pairs.
    ExtractLesions(ExtractArgs),
    /// Render side-by-side comparisons of all blend modes.
    Preview(PreviewArgs),
    /// Re-check a manifest's placements and masks against the dataset.
    Validate(ValidateArgs),
    /// Score predicted masks against ground truth (CSV, one row per class).
    Eval(EvalArgs),
    /// Print a commented default configuration.
    InitConfig(InitArgs),
}

#[derive(Args)]
struct Overrides {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Blend mode: soft, hard, gaussian or poisson.
    #[arg(long, value_name = "MODE")]
    blend: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    common: Overrides,
    /// Real-to-synthetic ratio such as 3:1.
    #[arg(long, value_name = "R", conflicts_with = "count")]
    ratio: Option<Ratio>,
    /// Absolute number of synthetic samples.
    #[arg(long, value_name = "N")]
    count: Option<usize>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct PreviewArgs {
    #[command(flatten)]
    common: Overrides,
    /// Number of previews, for sample indices start..start+n.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// First sample index.
    #[arg(long, default_value_t = 0)]
    start: usize,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Dataset root, if it moved since generation.
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted label PNGs.
    #[arg(long, value_name = "DIR")]
    pred: PathBuf,
    /// Directory of ground-truth label PNGs with matching names.
    #[arg(long, value_name = "DIR")]
    truth: PathBuf,
    /// Configuration supplying the pixel-value to class map. Without it,
    /// pixel values are class ids.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write the CSV here instead of standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InitArgs {
    /// Write here instead of standard output; refuses to overwrite.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// Loads the config and applies flag overrides, returning `key=value` for
/// each one applied.
fn load_with_overrides(o: &Overrides) -> Result<(RunConfig, Vec<String>)> {
    let mut cfg = RunConfig::load(&o.config)?;
    let mut applied = Vec::new();
    if let Some(seed) = o.seed {
        cfg.seed = seed;
        applied.push(format!("seed={seed}"));
    }
    if let Some(name) = &o.blend {
        let mode = BlendMode::from_name(name)?;
        if mode.name() != cfg.blend.name() {
            cfg.blend = mode;
        }
        applied.push(format!("blend={name}"));
    }
    if let Some(out) = &o.out {
        cfg.output_root = out.clone();
        applied.push(format!("output_root={}", out.display()));
    }
    Ok((cfg, applied))
}

fn augment(a: &AugmentArgs) -> Result<()> {
    let (mut cfg, mut overrides) = load_with_overrides(&a.common)?;
    if let Some(r) = a.ratio {
        cfg.ratio = Some(r);
        cfg.count = None;
        overrides.push(format!("ratio={r}"));
    }
    if let Some(n) = a.count {
        cfg.count = Some(n);
        cfg.ratio = None;
        overrides.push(format!("count={n}"));
    }
    if a.jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    cfg.validate()?;
    let summary = synthesize_batch(&cfg, &BatchOptions { jobs: a.jobs, overrides })?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    let r = &summary.rejections;
    eprintln!(
        "{} synthetic samples from {} real images; manifest {}",
        summary.samples,
        summary.real_records,
        summary.manifest.display()
    );
    eprintln!(
        "redraws: {} placement exhausted, {} reference cropped, {} empty after transform, {} oversized; rejected offsets: {} reference, {} lesion overlap",
        r.exhausted, r.reference_cropped, r.empty_masks, r.oversized, r.placement.reference, r.placement.lesion_overlap
    );
    Ok(())
}

fn extract_lesions(a: &ExtractArgs) -> Result<()> {
    let (cfg, _) = load_with_overrides(&a.common)?;
    cfg.validate()?;
    let idx = scan_dataset(&cfg.dataset_root, &cfg.classes)?;
    for w in &idx.warnings {
        eprintln!("warning: {w}");
    }
    let bank = build_lesion_bank(&idx, cfg.min_area, cfg.context_margin(), Some(cfg.output_dims()))?;
    let dir = a.common.out.clone().unwrap_or_else(|| cfg.output_root.join("lesions"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for l in &bank {
        let base = format!("{}_{:03}", l.source_stem, l.component);
        save_image(dir.join(format!("{base}_patch.png")), &l.patch, cfg.output_bit_depth)?;
        save_binary_mask(dir.join(format!("{base}_mask.png")), &l.mask)?;
    }
    eprintln!("{} lesions from {} images written to {}", bank.len(), idx.records.len(), dir.display());
    Ok(())
}

fn preview(a: &PreviewArgs) -> Result<()> {
    let (cfg, _) = load_with_overrides(&a.common)?;
    let run = prepare(&cfg)?;
    let dir = a.common.out.clone().unwrap_or_else(|| cfg.output_root.join("preview"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for i in a.start..a.start + a.n {
        let row = render_preview(&cfg, i, &run).with_context(|| format!("preview of sample {i}"))?;
        save_image(dir.join(format!("preview_{i:06}.png")), &row, BitDepth::Eight)?;
    }
    eprintln!(
        "{} previews written to {} (background | weights | soft | hard | gaussian | poisson)",
        a.n,
        dir.display()
    );
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<bool> {
    let report = validate_manifest(&a.manifest, a.dataset.as_deref())?;
    for v in &report.violations {
        eprintln!("sample {}: {:?}: {}", v.index, v.kind, v.detail);
    }
    println!("{} entries checked, {} violations", report.entries_checked, report.violations.len());
    println!("{} pasted-lesion overlap pixels", report.lesion_overlap_pixels);
    Ok(report.is_clean())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let classes = match &a.config {
        Some(p) => RunConfig::load(p)?.classes.values,
        None => ClassConfig::identity(),
    };
    let table = evaluate_dirs(&a.pred, &a.truth, &classes)?;
    for m in &table.missing_predictions {
        eprintln!("warning: no prediction for {m}");
    }
    write_text(a.out.as_deref(), &table.to_csv(), true)
}

fn write_text(path: Option<&Path>, text: &str, overwrite: bool) -> Result<()> {
    match path {
        None => print!("{text}"),
        Some(p) => {
            if !overwrite && p.exists() {
                bail!("{} already exists", p.display());
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Augment(a) => augment(&a)?,
        Command::ExtractLesions(a) => extract_lesions(&a)?,
        Command::Preview(a) => preview(&a)?,
        Command::Validate(a) => return validate(&a),
        Command::Eval(a) => eval(&a)?,
        Command::InitConfig(a) => write_text(a.out.as_deref(), DEFAULT_CONFIG_TOML, false)?,
    }
    Ok(true)
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match run(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            1
        }
    }
}
