//! The training driver: steps, periodic checkpoints, loss log and resume.
//!
//! `out_dir/checkpoint/` always holds the latest checkpoint and
//! `out_dir/loss.csv` one row per completed step (`step,loss,wall_time_s`,
//! wall time measured from the start of the current invocation).

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use thoraxdiff_core::data::{SemanticLayout, Volume};
use thoraxdiff_core::denoiser::DenoiserConfig;
use thoraxdiff_core::train::{TrainConfig, Trainer};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::io::write_atomic;
use crate::{Error, Result};

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const LOSS_LOG: &str = "loss.csv";

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Continue from `out_dir/checkpoint` when it exists.
    pub resume: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub checkpoint: PathBuf,
    pub step: u64,
    /// `(step, loss)` for the steps run by this call.
    pub losses: Vec<(u64, f64)>,
}

fn check_dataset(dataset: &[(Volume, SemanticLayout)], resolution: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(thoraxdiff_core::Error::InsufficientData {
            what: "training dataset",
            needed: 1,
            got: 0,
        }
        .into());
    }
    for (i, (v, l)) in dataset.iter().enumerate() {
        if v.dims() != [resolution; 3] || l.dims() != v.dims() {
            return Err(Error::Input {
                what: format!("dataset entry {i}"),
                source: thoraxdiff_core::Error::Shape {
                    context: "training pair",
                    expected: vec![resolution; 3],
                    actual: if v.dims() != [resolution; 3] { v.dims().to_vec() } else { l.dims().to_vec() },
                },
            });
        }
    }
    Ok(())
}

/// Fields that must not change across a resume: everything except the step
/// budget and the checkpoint cadence.
fn same_run(a: &TrainConfig, b: &TrainConfig) -> bool {
    let strip = |c: &TrainConfig| TrainConfig {
        total_steps: 0,
        checkpoint_every: 0,
        ..c.clone()
    };
    strip(a) == strip(b)
}

/// Keeps the header and rows with `step <= last`.
fn truncate_log(path: &Path, last: u64) -> Result<()> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        let keep = i == 0 || line.split(',').next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s <= last);
        if keep {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    write_atomic(path, kept.as_bytes())
}

pub fn fit(
    denoiser: &DenoiserConfig,
    train: &TrainConfig,
    dataset: &[(Volume, SemanticLayout)],
    out_dir: &Path,
    options: &FitOptions,
    progress: &mut dyn FnMut(u64, f64),
) -> Result<FitOutcome> {
    let trainer = Trainer::new(denoiser, train)?;
    check_dataset(dataset, denoiser.resolution)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ck_dir = out_dir.join(CHECKPOINT_DIR);
    let log_path = out_dir.join(LOSS_LOG);

    let resuming = options.resume && ck_dir.join("manifest.json").exists();
    let mut state = if resuming {
        let ck = load_checkpoint(&ck_dir)?;
        if &ck.denoiser != denoiser {
            return Err(thoraxdiff_core::Error::Config {
                field: "denoiser",
                reason: "differs from the checkpoint being resumed".into(),
            }
            .into());
        }
        if !same_run(&ck.train, train) {
            return Err(thoraxdiff_core::Error::Config {
                field: "train",
                reason: "only total_steps and checkpoint_every may change on resume".into(),
            }
            .into());
        }
        truncate_log(&log_path, ck.state.step)?;
        ck.state
    } else {
        write_atomic(&log_path, b"step,loss,wall_time_s\n")?;
        trainer.init_state()
    };

    let file = OpenOptions::new().append(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let save = |state: &thoraxdiff_core::train::TrainState| {
        save_checkpoint(
            &ck_dir,
            &Checkpoint {
                denoiser: denoiser.clone(),
                train: train.clone(),
                state: state.clone(),
            },
        )
    };
    if !resuming {
        save(&state)?;
    }

    let start = Instant::now();
    let mut losses = Vec::new();
    while state.step < train.total_steps {
        let loss = match trainer.train_step_on(&mut state, dataset) {
            Ok(l) => l,
            Err(e) => {
                log.flush().map_err(|io| Error::io(&log_path, io))?;
                return Err(e.into());
            }
        };
        log.write_record(&[state.step.to_string(), format!("{loss:.9}"), format!("{:.3}", start.elapsed().as_secs_f64())])
            .map_err(|e| Error::io(&log_path, e.into()))?;
        losses.push((state.step, loss));
        progress(state.step, loss);
        let every = train.checkpoint_every;
        if every > 0 && state.step % every == 0 && state.step < train.total_steps {
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            save(&state)?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    save(&state)?;
    Ok(FitOutcome {
        checkpoint: ck_dir,
        step: state.step,
        losses,
    })
}
