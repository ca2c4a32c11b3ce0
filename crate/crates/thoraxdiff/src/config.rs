//! The TOML run configuration shared by all commands.
//!
//! ```toml
//! [denoiser]
//! resolution = 32
//! base_width = 16
//!
//! [train]
//! lr = 1e-4
//! total_steps = 2000
//! schedule = { type = "cosine", T = 250, s = 0.008, beta_max = 0.999 }
//!
//! [sampler]
//! mode = "aas"
//!
//! [metrics]
//! mmd_bandwidth = 2.0
//! ```
//!
//! Omitted keys take their defaults; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thoraxdiff_core::data::PhantomConfig;
use thoraxdiff_core::denoiser::DenoiserConfig;
use thoraxdiff_core::diffusion::SamplerConfig;
use thoraxdiff_core::metrics::{RbfKernel, DEFAULT_OVERLAP_SAMPLES, HANDCRAFTED_ID};
use thoraxdiff_core::train::TrainConfig;

use crate::io::write_atomic;
use crate::{Error, Result};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub extractor: String,
    /// RBF bandwidth for MMD; the median pairwise distance when absent.
    pub mmd_bandwidth: Option<f64>,
    pub overlap_samples: usize,
    pub overlap_seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            extractor: HANDCRAFTED_ID.into(),
            mmd_bandwidth: None,
            overlap_samples: DEFAULT_OVERLAP_SAMPLES,
            overlap_seed: 0,
        }
    }
}

impl MetricsConfig {
    pub fn kernel(&self) -> RbfKernel {
        RbfKernel {
            bandwidth: self.mmd_bandwidth,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub denoiser: DenoiserConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub phantom: PhantomConfig,
    pub metrics: MetricsConfig,
}

fn config_error(field: &'static str, reason: impl Into<String>) -> Error {
    thoraxdiff_core::Error::Config {
        field,
        reason: reason.into(),
    }
    .into()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_error("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Core(thoraxdiff_core::Error::Config { field, reason }) => config_error(field, format!("{}: {reason}", path.display())),
            other => other,
        })
    }

    /// `path`, or the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.denoiser.validate()?;
        self.train.validate()?;
        self.phantom.validate()?;
        self.train.schedule.build()?;
        let need = 1 + self.train.conditioning.channels();
        if self.denoiser.in_channels != need {
            return Err(config_error(
                "denoiser.in_channels",
                format!("conditioning `{}` needs {need} input channels", self.train.conditioning.as_str()),
            ));
        }
        if self.metrics.extractor != HANDCRAFTED_ID {
            return Err(config_error("metrics.extractor", format!("unknown extractor `{}`", self.metrics.extractor)));
        }
        if self.metrics.mmd_bandwidth.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return Err(config_error("metrics.mmd_bandwidth", "must be positive"));
        }
        if self.metrics.overlap_samples == 0 {
            return Err(config_error("metrics.overlap_samples", "must be at least 1"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Writes `dir/resolved_config.toml`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG);
        write_atomic(&path, self.to_toml().as_bytes())?;
        Ok(path)
    }
}
