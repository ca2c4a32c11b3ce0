//! The `thoraxdiff` command line.
//!
//! Every command exits 0 on success and prints a one-line JSON summary on
//! stdout. Failures print a human line and then `{"error":{...}}` on stderr
//! with exit code 2 (usage or configuration), 3 (data or format), 4 (numeric
//! health) or 5 (I/O).
//!
//! `--out` may be omitted when `THORAXDIFF_OUT` is set; outputs then land in
//! a per-command directory or file under it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thoraxdiff_core::data::{Conditioning, Volume};
use thoraxdiff_core::diffusion::SamplerMode;
use thoraxdiff_core::metrics::{FeatureExtractor, HandcraftedExtractor};

use crate::checkpoint::load_checkpoint;
use crate::config::RunConfig;
use crate::dataset::{generate_dataset, load_dataset};
use crate::evaluate::{default_pairing, evaluate_dirs, read_manifest, volume_names, write_report};
use crate::fit::{fit, FitOptions};
use crate::io::{file_pair, load_layout, load_volume, save_volume, write_atomic, write_json};
use crate::mds_plot::{analyze, read_feature_csv, write_feature_csv, write_outputs, FeatureTable};
use crate::montage::{encode_png, render_montage, Axis};
use crate::sample::{sample_volume, Provenance};
use crate::{Error, Result};

/// Default output root for commands run without `--out`.
pub const OUT_ENV: &str = "THORAXDIFF_OUT";

#[derive(Debug, Parser)]
#[command(name = "thoraxdiff", version, about = "Layout-guided volumetric diffusion on synthetic chest phantoms")]
struct Cli {
    /// Worker threads for feature extraction in `evaluate` and `features`.
    /// Outputs do not depend on it. Training and sampling always use one
    /// thread.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic phantoms (volume + layout pairs) and an index.
    PhantomGen(PhantomGenArgs),
    /// Train the denoiser on a phantom directory.
    Train(TrainArgs),
    /// Draw one volume from a checkpoint.
    Sample(SampleArgs),
    /// FID, MMD and masked MSE between a real and a synthetic directory.
    Evaluate(EvaluateArgs),
    /// Write a feature CSV for volumes or directories of volumes.
    Features(FeaturesArgs),
    /// Tile evenly spaced slices into an 8-bit grayscale PNG.
    Montage(MontageArgs),
    /// Joint MDS embedding, per-source ellipses and their overlaps.
    MdsPlot(MdsPlotArgs),
}

#[derive(Debug, Args)]
struct PhantomGenArgs {
    #[arg(long, short = 'n')]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `phantom.resolution`.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `train.total_steps`.
    #[arg(long)]
    steps: Option<u64>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Checkpoint directory.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    /// Real volume kept outside the lungs. Required by `--mode aas`.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, value_parser = ["aas", "plain"])]
    mode: Option<String>,
    /// Defaults to the conditioning the checkpoint was trained with.
    #[arg(long, value_parser = ["lung+nodule", "nodule"])]
    conditioning: Option<String>,
    /// Sample with the EMA weights (the default).
    #[arg(long, conflicts_with = "raw")]
    ema: bool,
    /// Sample with the raw training weights.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_id: Option<u64>,
    /// Supplies `[sampler]` defaults; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output stem: writes `<out>.json`, `<out>.raw` and
    /// `<out>.provenance.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    syn: PathBuf,
    /// JSON pairing manifest. Without it, volumes are paired by name.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Fold count for name pairing.
    #[arg(long, default_value_t = 1, conflicts_with = "manifest")]
    folds: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    /// Volume files or directories of volumes.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MontageArgs {
    #[arg(long)]
    volume: PathBuf,
    #[arg(long, default_value = "z", value_parser = ["z", "y", "x"])]
    axis: String,
    /// `ROWSxCOLS`.
    #[arg(long, default_value = "1x1")]
    grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MdsPlotArgs {
    /// `NAME=features.csv`, once per source.
    #[arg(long = "source", required = true)]
    sources: Vec<String>,
    /// Source the others are compared with. Defaults to the first.
    #[arg(long)]
    reference: Option<String>,
    /// Monte Carlo points for the overlap areas.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            let err = Error::Usage(e.kind().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<serde_json::Value> {
    let threads = cli.threads.max(1);
    match cli.command {
        Command::PhantomGen(a) => phantom_gen(a),
        Command::Train(a) => train(a),
        Command::Sample(a) => sample(a),
        Command::Evaluate(a) => evaluate(a, threads),
        Command::Features(a) => features(a, threads),
        Command::Montage(a) => montage(a),
        Command::MdsPlot(a) => mds_plot(a),
    }
}

fn out_path(given: Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    if let Some(p) = given {
        return Ok(p);
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => Ok(PathBuf::from(root).join(default_name)),
        _ => Err(Error::Usage(format!("--out is required when {OUT_ENV} is not set"))),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = file_pair(stem).0.with_extension("").into_os_string();
    s.push(suffix);
    s.into()
}

fn phantom_gen(a: PhantomGenArgs) -> Result<serde_json::Value> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(r) = a.resolution {
        cfg.phantom.resolution = r;
    }
    cfg.phantom.validate()?;
    let out = out_path(a.out, "phantoms")?;
    let index = generate_dataset(a.count, a.seed, &cfg.phantom, &out)?;
    cfg.write_resolved(&out)?;
    Ok(json!({ "out": out, "count": index.count }))
}

fn train(a: TrainArgs) -> Result<serde_json::Value> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(s) = a.steps {
        cfg.train.total_steps = s;
    }
    cfg.validate()?;
    let data = load_dataset(&a.data)?;
    let out = out_path(a.out, "train")?;
    create_dir(&out)?;
    cfg.write_resolved(&out)?;
    let pairs: Vec<_> = data.into_iter().map(|e| (e.volume, e.layout)).collect();
    let every = (cfg.train.total_steps / 20).max(1);
    let total = cfg.train.total_steps;
    let mut progress = |step: u64, loss: f64| {
        if step % every == 0 || step == total {
            eprintln!("step {step}/{total} loss {loss:.5}");
        }
    };
    let outcome = fit(&cfg.denoiser, &cfg.train, &pairs, &out, &FitOptions { resume: a.resume }, &mut progress)?;
    let last = outcome.losses.last().map(|l| l.1);
    Ok(json!({ "checkpoint": outcome.checkpoint, "step": outcome.step, "last_loss": last }))
}

fn sample(a: SampleArgs) -> Result<serde_json::Value> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    cfg.denoiser = ck.denoiser.clone();
    cfg.train = ck.train.clone();
    let s = &mut cfg.sampler;
    if a.config.is_none() {
        s.conditioning = ck.train.conditioning;
    }
    if let Some(m) = &a.mode {
        s.mode = m.parse::<SamplerMode>()?;
    }
    if let Some(c) = &a.conditioning {
        s.conditioning = c.parse::<Conditioning>()?;
    }
    if a.ema {
        s.use_ema_weights = true;
    }
    if a.raw {
        s.use_ema_weights = false;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(id) = a.sample_id {
        s.sample_id = id;
    }
    let sampler = cfg.sampler.clone();

    let layout = load_layout(&a.layout)?;
    let reference = match (sampler.mode, &a.reference) {
        (SamplerMode::Aas, Some(p)) => Some(load_volume(p)?),
        (SamplerMode::Aas, None) => return Err(Error::Usage("--mode aas needs --reference".into())),
        (SamplerMode::Plain, Some(p)) => {
            eprintln!("warning: --mode plain ignores --reference {}", p.display());
            None
        }
        (SamplerMode::Plain, None) => None,
    };
    let out = out_path(a.out, "sample")?;
    create_parent(&out)?;

    let steps = ck.train.schedule.steps();
    let every = (steps / 10).max(1);
    let mut progress = |t: usize| {
        if t % every == 0 {
            eprintln!("t = {t}");
        }
    };
    let vol: Volume = sample_volume(&ck, &layout, reference.as_ref(), &sampler, &mut progress)?;
    let header = save_volume(&out, &vol)?;

    let provenance = Provenance {
        checkpoint: a.checkpoint.display().to_string(),
        checkpoint_step: ck.state.step,
        layout: a.layout.display().to_string(),
        reference: reference.as_ref().and(a.reference.as_ref()).map(|p| p.display().to_string()),
        weights: if sampler.use_ema_weights { "ema" } else { "raw" },
        schedule: ck.train.schedule,
        denoiser: ck.denoiser.clone(),
        sampler,
    };
    let prov_path = with_suffix(&out, ".provenance.json");
    write_json(&prov_path, &provenance)?;
    let cfg_path = with_suffix(&out, ".resolved_config.toml");
    write_atomic(&cfg_path, cfg.to_toml().as_bytes())?;
    Ok(json!({ "volume": header, "provenance": prov_path }))
}

fn evaluate(a: EvaluateArgs, threads: usize) -> Result<serde_json::Value> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    cfg.validate()?;
    if a.folds == 0 {
        return Err(Error::Usage("--folds must be at least 1".into()));
    }
    let manifest = match &a.manifest {
        Some(p) => read_manifest(p)?,
        None => default_pairing(&a.real, &a.syn, a.folds)?,
    };
    let report = evaluate_dirs(&a.real, &a.syn, &manifest, &HandcraftedExtractor, cfg.metrics.kernel(), threads)?;
    let out = out_path(a.out, "evaluate")?;
    create_dir(&out)?;
    write_report(&out, &report)?;
    cfg.write_resolved(&out)?;
    Ok(json!({
        "out": out,
        "folds": report.folds.len(),
        "fid": report.fid.mean,
        "mmd": report.mmd.mean,
        "mse": report.mse.mean,
    }))
}

fn features(a: FeaturesArgs, threads: usize) -> Result<serde_json::Value> {
    let mut inputs: Vec<(String, PathBuf)> = Vec::new();
    for p in &a.input {
        if p.is_dir() {
            for name in volume_names(p)? {
                inputs.push((name.clone(), p.join(format!("{name}.json"))));
            }
        } else {
            let header = file_pair(p).0;
            let name = header.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            inputs.push((name, header));
        }
    }
    let extractor = HandcraftedExtractor;
    let rows = crate::par_map(&inputs, threads, |(name, path)| -> Result<_> {
        let vol = load_volume(path)?;
        let f = extractor.extract(&vol).map_err(|e| Error::Input {
            what: path.display().to_string(),
            source: e,
        })?;
        Ok((name.clone(), f))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let table = FeatureTable::from_vectors(rows)?;
    let out = out_path(a.out, "features.csv")?;
    create_parent(&out)?;
    write_feature_csv(&out, &table)?;
    Ok(json!({ "out": out, "rows": table.rows.len(), "extractor": table.extractor_id }))
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Usage(format!("--grid `{s}` is not ROWSxCOLS"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

fn montage(a: MontageArgs) -> Result<serde_json::Value> {
    let (rows, cols) = parse_grid(&a.grid)?;
    let axis: Axis = a.axis.parse()?;
    let vol = load_volume(&a.volume)?;
    let img = render_montage(&vol, axis, rows, cols)?;
    let out = out_path(a.out, "montage.png")?;
    create_parent(&out)?;
    write_atomic(&out, &encode_png(&img)?)?;
    Ok(json!({ "out": out, "width": img.width, "height": img.height }))
}

fn mds_plot(a: MdsPlotArgs) -> Result<serde_json::Value> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(n) = a.samples {
        cfg.metrics.overlap_samples = n;
    }
    if let Some(s) = a.seed {
        cfg.metrics.overlap_seed = s;
    }
    cfg.validate()?;
    let mut sources = Vec::with_capacity(a.sources.len());
    for source in &a.sources {
        let (name, path) = source
            .split_once('=')
            .filter(|(n, p)| !n.is_empty() && !p.is_empty())
            .ok_or_else(|| Error::Usage(format!("--source `{source}` is not NAME=PATH")))?;
        if sources.iter().any(|(n, _): &(String, FeatureTable)| n == name) {
            return Err(Error::Usage(format!("source `{name}` given twice")));
        }
        sources.push((name.to_string(), read_feature_csv(Path::new(path))?));
    }
    let reference = a.reference.unwrap_or_else(|| sources[0].0.clone());
    let analysis = analyze(&sources, &reference, cfg.metrics.overlap_samples, cfg.metrics.overlap_seed)?;
    let out = out_path(a.out, "mds")?;
    create_dir(&out)?;
    write_outputs(&out, &analysis)?;
    cfg.write_resolved(&out)?;
    Ok(json!({ "out": out, "reference": reference, "sources": sources.len() }))
}
