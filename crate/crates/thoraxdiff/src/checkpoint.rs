//! Checkpoint directories: `manifest.json` plus one little-endian `f32` blob
//! per parameter vector.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thoraxdiff_core::denoiser::{Denoiser, DenoiserConfig, UNet};
use thoraxdiff_core::train::{AdamConfig, TrainConfig, TrainState};

use crate::io::{f32_bytes, read_f32_blob, read_json, write_atomic, write_json};
use crate::{Error, Result};

pub const FORMAT: &str = "thoraxdiff-checkpoint";
pub const VERSION: u32 = 1;

const PARAMS: &str = "params.f32";
const EMA: &str = "ema.f32";
const ADAM_M: &str = "adam_m.f32";
const ADAM_V: &str = "adam_v.f32";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub denoiser: DenoiserConfig,
    pub train: TrainConfig,
    pub state: TrainState,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngState {
    seed: u64,
    /// Step index whose draws come next.
    next_step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Blobs {
    params: String,
    ema: String,
    adam_m: String,
    adam_v: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    step: u64,
    rng: RngState,
    optimizer: AdamConfig,
    param_count: usize,
    denoiser: DenoiserConfig,
    train: TrainConfig,
    blobs: Blobs,
}

impl Checkpoint {
    pub fn net(&self) -> Result<UNet> {
        Ok(UNet::new(&self.denoiser)?)
    }

    /// A sampling-ready network with either the EMA or the raw weights.
    pub fn denoiser(&self, use_ema: bool) -> Result<Denoiser<f32>> {
        let params = if use_ema { &self.state.ema } else { &self.state.params };
        Ok(Denoiser::from_params(&self.denoiser, params.clone())?)
    }
}

/// Writes into a fresh sibling directory, then swaps it in, so `dir` always
/// holds either the old or the new checkpoint.
pub fn save_checkpoint(dir: &Path, ck: &Checkpoint) -> Result<()> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".checkpoint-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    let s = &ck.state;
    for (name, values) in [(PARAMS, &s.params), (EMA, &s.ema), (ADAM_M, &s.adam_m), (ADAM_V, &s.adam_v)] {
        write_atomic(&staging.path().join(name), &f32_bytes(values))?;
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        step: s.step,
        rng: RngState {
            seed: s.seed,
            next_step: s.step,
        },
        optimizer: ck.train.adam,
        param_count: s.params.len(),
        denoiser: ck.denoiser.clone(),
        train: ck.train.clone(),
        blobs: Blobs {
            params: PARAMS.into(),
            ema: EMA.into(),
            adam_m: ADAM_M.into(),
            adam_v: ADAM_V.into(),
        },
    };
    write_json(&staging.path().join("manifest.json"), &manifest)?;
    let staged = staging.keep();
    if dir.exists() {
        let old = tempfile::Builder::new()
            .prefix(".checkpoint-old-")
            .tempdir_in(&parent)
            .map_err(|e| Error::io(&parent, e))?
            .keep();
        fs::remove_dir(&old).map_err(|e| Error::io(&old, e))?;
        fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
        fs::rename(&staged, dir).map_err(|e| Error::io(dir, e))?;
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    } else {
        fs::rename(&staged, dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join("manifest.json");
    let m: Manifest = read_json(&path)?;
    if m.format != FORMAT {
        return Err(Error::format(&path, "format", format!("expected `{FORMAT}`, found `{}`", m.format)));
    }
    if m.version != VERSION {
        return Err(Error::format(&path, "version", format!("unsupported version {}", m.version)));
    }
    if m.rng.next_step != m.step {
        return Err(Error::format(&path, "rng.next_step", "does not match `step`"));
    }
    if m.optimizer != m.train.adam {
        return Err(Error::format(&path, "optimizer", "does not match `train.adam`"));
    }
    let expected = UNet::new(&m.denoiser)?.layout().len();
    if m.param_count != expected {
        return Err(Error::format(
            &path,
            "param_count",
            format!("denoiser configuration has {expected} parameters, manifest says {}", m.param_count),
        ));
    }
    let blob = |name: &str| read_f32_blob(&dir.join(name), expected);
    let state = TrainState {
        params: blob(&m.blobs.params)?,
        ema: blob(&m.blobs.ema)?,
        adam_m: blob(&m.blobs.adam_m)?,
        adam_v: blob(&m.blobs.adam_v)?,
        step: m.step,
        seed: m.rng.seed,
    };
    Ok(Checkpoint {
        denoiser: m.denoiser,
        train: m.train,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use thoraxdiff_core::train::Trainer;

    #[test]
    fn round_trip_and_replace() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DenoiserConfig::tiny();
        let train = TrainConfig::default();
        let trainer = Trainer::new(&cfg, &train).unwrap();
        let mut state = trainer.init_state();
        state.step = 3;
        state.adam_v[0] = 0.5;
        let ck = Checkpoint {
            denoiser: cfg,
            train,
            state,
        };
        let path = dir.path().join("ck");
        save_checkpoint(&path, &ck).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
        let mut later = ck.clone();
        later.state.step = 9;
        save_checkpoint(&path, &later).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), later);
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn truncated_blob_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DenoiserConfig::tiny();
        let train = TrainConfig::default();
        let state = Trainer::new(&cfg, &train).unwrap().init_state();
        let path = dir.path().join("ck");
        save_checkpoint(&path, &Checkpoint { denoiser: cfg, train, state }).unwrap();
        let ema = path.join(EMA);
        let bytes = fs::read(&ema).unwrap();
        fs::write(&ema, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    }
}
