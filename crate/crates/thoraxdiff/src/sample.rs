//! Drawing volumes from a checkpoint.

use serde::Serialize;
use thoraxdiff_core::data::{SemanticLayout, Volume};
use thoraxdiff_core::denoiser::DenoiserConfig;
use thoraxdiff_core::diffusion::{aas_sample_with_progress, plain_sample_with_progress, SamplerConfig, SamplerMode};
use thoraxdiff_core::schedule::ScheduleDescriptor;

use crate::checkpoint::Checkpoint;
use crate::{Error, Result};

/// Samples one volume. Returns an error if the sampler's conditioning differs
/// from the one the checkpoint was trained with, or if AAS is requested
/// without a reference.
pub fn sample_volume(
    ck: &Checkpoint,
    layout: &SemanticLayout,
    reference: Option<&Volume>,
    cfg: &SamplerConfig,
    progress: &mut dyn FnMut(usize),
) -> Result<Volume> {
    if cfg.conditioning != ck.train.conditioning {
        return Err(thoraxdiff_core::Error::Config {
            field: "conditioning",
            reason: format!(
                "checkpoint was trained with `{}`, sampler asks for `{}`",
                ck.train.conditioning.as_str(),
                cfg.conditioning.as_str()
            ),
        }
        .into());
    }
    let model = ck.denoiser(cfg.use_ema_weights)?;
    let schedule = ck.train.schedule.build()?;
    let latent = match cfg.mode {
        SamplerMode::Aas => {
            let reference = reference.ok_or_else(|| Error::Usage("AAS sampling needs a reference volume".into()))?;
            aas_sample_with_progress(&model, reference, layout, &schedule, cfg, progress)?
        }
        SamplerMode::Plain => plain_sample_with_progress(&model, layout, &schedule, cfg, progress)?,
    };
    Ok(latent.to_volume(layout.spacing_mm())?)
}

/// Written next to every sampled volume.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub checkpoint: String,
    pub checkpoint_step: u64,
    pub layout: String,
    pub reference: Option<String>,
    pub sampler: SamplerConfig,
    pub weights: &'static str,
    pub schedule: ScheduleDescriptor,
    pub denoiser: DenoiserConfig,
}
