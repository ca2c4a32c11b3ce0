//! Forward noising, the conditional denoising step, and the two samplers.
//!
//! The anatomically aware sampler runs the usual ancestral chain but, after
//! every step, overwrites the extra-pulmonary region with the reference
//! volume noised to the same time index. Because `alpha_bar_0 = 1`, the last
//! blend copies the reference verbatim outside the lungs.
//!
//! Sampling is `f32`; schedule coefficients stay `f64` and are applied per
//! element in `f64` before rounding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{derive_masks, layout_to_channels, Conditioning, Mask, SemanticLayout, Volume};
use crate::denoiser::NoisePredictor;
use crate::rng::{Purpose, SeedStream};
use crate::schedule::NoiseSchedule;
use crate::{Error, Result, Tensor};

#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum SamplerMode {
    /// Anatomically aware sampling: blend in the noised reference outside
    /// the lungs at every step.
    #[default]
    Aas,
    /// Plain conditional ancestral sampling; no reference.
    Plain,
}

impl SamplerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerMode::Aas => "aas",
            SamplerMode::Plain => "plain",
        }
    }
}

impl core::str::FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aas" => Ok(SamplerMode::Aas),
            "plain" => Ok(SamplerMode::Plain),
            other => Err(Error::config("mode", format!("unknown sampler mode `{other}` (expected aas or plain)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub conditioning: Conditioning,
    /// Sample with the EMA shadow weights rather than the raw ones. Read by
    /// whoever loads the weights; the sampler itself only sees a predictor.
    pub use_ema_weights: bool,
    pub seed: u64,
    /// Distinguishes samples drawn under one seed.
    pub sample_id: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: SamplerMode::Aas,
            conditioning: Conditioning::LungAndNodule,
            use_ema_weights: true,
            seed: 0,
            sample_id: 0,
        }
    }
}

/// A diffusion-space grid together with the time step it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVolume {
    dims: [usize; 3],
    values: Vec<f32>,
    t: usize,
}

impl LatentVolume {
    pub fn new(dims: [usize; 3], values: Vec<f32>, t: usize) -> Result<Self> {
        let n = dims.iter().product::<usize>();
        if values.len() != n {
            return Err(Error::shape("latent values", &[n], &[values.len()]));
        }
        Ok(Self { dims, values, t })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Clamps to `[-1, 1]` and attaches spacing.
    pub fn to_volume(&self, spacing_mm: [f64; 3]) -> Result<Volume> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericHealth {
                context: "sampled volume",
                step: Some(self.t as u64),
            });
        }
        let values = self.values.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        Volume::new(self.dims, spacing_mm, values)
    }
}

fn check_noise(dims: [usize; 3], eps: &[f32]) -> Result<()> {
    let n = dims.iter().product::<usize>();
    if eps.len() != n {
        return Err(Error::shape("noise grid", &[n], &[eps.len()]));
    }
    Ok(())
}

/// `sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * eps`, elementwise in `f64`.
pub(crate) fn mix(x0: &[f32], eps: &[f32], alpha_bar: f64, out: &mut [f32]) {
    let a = alpha_bar.sqrt();
    let b = (1.0 - alpha_bar).sqrt();
    for ((o, &x), &e) in out.iter_mut().zip(x0).zip(eps) {
        *o = (a * x as f64 + b * e as f64) as f32;
    }
}

/// Samples `x_t` given the clean volume and a noise grid.
pub fn forward_diffuse(x0: &Volume, t: usize, eps: &[f32], schedule: &NoiseSchedule) -> Result<LatentVolume> {
    schedule.check_step(t)?;
    check_noise(x0.dims(), eps)?;
    let mut values = vec![0.0; eps.len()];
    mix(x0.values(), eps, schedule.alpha_bar(t), &mut values);
    LatentVolume::new(x0.dims(), values, t)
}

/// The reference noised to `t - 1`; identical arithmetic to
/// [`forward_diffuse`], so `t_minus_1 = 0` returns the reference exactly.
pub fn reference_diffuse(x_ref: &Volume, t_minus_1: usize, eps: &[f32], schedule: &NoiseSchedule) -> Result<LatentVolume> {
    forward_diffuse(x_ref, t_minus_1, eps, schedule)
}

/// One reverse step from `t` to `t - 1`:
/// `(x_t - (1 - α_t) / sqrt(1 - ᾱ_t) · ε_θ) / sqrt(α_t) + σ_t z`.
///
/// `cond` holds the layout channels appended to the latent.
pub fn denoise_step_lung(
    x_t: &LatentVolume,
    cond: &Tensor<f32>,
    model: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    z: &[f32],
) -> Result<LatentVolume> {
    let t = x_t.t;
    if t == 0 {
        return Err(Error::StepUnderflow);
    }
    schedule.check_step(t)?;
    check_noise(x_t.dims, z)?;
    if cond.dims() != x_t.dims {
        return Err(Error::shape("conditioning channels", &x_t.dims, &cond.dims()));
    }
    if model.in_channels() != 1 + cond.channels() {
        return Err(Error::config(
            "conditioning",
            format!(
                "model expects {} input channels but latent plus layout gives {}",
                model.in_channels(),
                1 + cond.channels()
            ),
        ));
    }
    let latent = Tensor::from_vec(1, x_t.dims, x_t.values.clone())?;
    let input = Tensor::concat(&[&latent, cond])?;
    let eps = model.predict_noise(&input, t)?;
    if eps.shape() != [1, x_t.dims[0], x_t.dims[1], x_t.dims[2]] {
        return Err(Error::shape("predicted noise", &[1, x_t.dims[0], x_t.dims[1], x_t.dims[2]], &eps.shape()));
    }
    let alpha = schedule.alpha(t);
    let inv_sqrt_alpha = 1.0 / alpha.sqrt();
    let coef = (1.0 - alpha) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let sigma = schedule.sigma(t);
    let values: Vec<f32> = x_t
        .values
        .iter()
        .zip(eps.data())
        .zip(z)
        .map(|((&x, &e), &zz)| (inv_sqrt_alpha * (x as f64 - coef * e as f64) + sigma * zz as f64) as f32)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericHealth {
            context: "denoising step",
            step: Some(t as u64),
        });
    }
    LatentVolume::new(x_t.dims, values, t - 1)
}

/// `(1 - m_e) ⊗ x_lung + m_e ⊗ x_extra`.
pub fn aas_blend(x_lung: &LatentVolume, x_extra: &LatentVolume, m_e: &Mask) -> Result<LatentVolume> {
    if x_extra.dims != x_lung.dims {
        return Err(Error::shape("blend operands", &x_lung.dims, &x_extra.dims));
    }
    if m_e.dims() != x_lung.dims {
        return Err(Error::shape("blend mask", &x_lung.dims, &m_e.dims()));
    }
    if x_lung.t != x_extra.t {
        return Err(Error::InputDomain(format!(
            "blend operands belong to different time steps ({} and {})",
            x_lung.t, x_extra.t
        )));
    }
    // The mask is binary, so selection is the blend without rounding.
    let values = x_lung
        .values
        .iter()
        .zip(&x_extra.values)
        .zip(m_e.values())
        .map(|((&l, &e), &m)| if m == 1 { e } else { l })
        .collect();
    LatentVolume::new(x_lung.dims, values, x_lung.t)
}

fn initial_latent(dims: [usize; 3], steps: usize, cfg: &SamplerConfig) -> LatentVolume {
    let n = dims.iter().product();
    let mut s = SeedStream::new(cfg.seed).substream(Purpose::InitialLatent, cfg.sample_id, 0);
    LatentVolume {
        dims,
        values: s.normal_vec(n),
        t: steps,
    }
}

/// `z` for the step leaving `t`: standard normal, except all zeros at `t = 1`.
fn step_noise(n: usize, t: usize, cfg: &SamplerConfig) -> Vec<f32> {
    if t == 1 {
        return vec![0.0; n];
    }
    SeedStream::new(cfg.seed)
        .substream(Purpose::StepNoise, cfg.sample_id, t as u64)
        .normal_vec(n)
}

fn check_mode(cfg: &SamplerConfig, expected: SamplerMode, model: &dyn NoisePredictor) -> Result<()> {
    if cfg.mode != expected {
        return Err(Error::config(
            "mode",
            format!("sampler called with mode `{}`", cfg.mode.as_str()),
        ));
    }
    if model.in_channels() != 1 + cfg.conditioning.channels() {
        return Err(Error::config(
            "conditioning",
            format!(
                "`{}` gives {} input channels but the model expects {}",
                cfg.conditioning.as_str(),
                1 + cfg.conditioning.channels(),
                model.in_channels()
            ),
        ));
    }
    Ok(())
}

/// Observer called after every completed reverse step with the new time index.
pub type Progress<'a> = &'a mut dyn FnMut(usize);

/// Anatomically aware sampling. Returns the unclamped latent at `t = 0`;
/// use [`LatentVolume::to_volume`] for a `[-1, 1]` volume.
pub fn aas_sample(
    model: &dyn NoisePredictor,
    x_ref: &Volume,
    layout: &SemanticLayout,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<LatentVolume> {
    aas_sample_with_progress(model, x_ref, layout, schedule, cfg, &mut |_| {})
}

pub fn aas_sample_with_progress(
    model: &dyn NoisePredictor,
    x_ref: &Volume,
    layout: &SemanticLayout,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    progress: Progress<'_>,
) -> Result<LatentVolume> {
    check_mode(cfg, SamplerMode::Aas, model)?;
    let dims = layout.dims();
    if x_ref.dims() != dims {
        return Err(Error::shape("reference volume", &dims, &x_ref.dims()));
    }
    let n = x_ref.len();
    let cond = layout_to_channels(layout, cfg.conditioning);
    let m_e = derive_masks(layout).extra;
    let mut x = initial_latent(dims, schedule.steps(), cfg);
    for t in (1..=schedule.steps()).rev() {
        let z = step_noise(n, t, cfg);
        let x_lung = denoise_step_lung(&x, &cond, model, schedule, &z)?;
        let eps = if t > 1 {
            SeedStream::new(cfg.seed)
                .substream(Purpose::ReferenceNoise, cfg.sample_id, t as u64)
                .normal_vec(n)
        } else {
            vec![0.0; n]
        };
        let x_extra = reference_diffuse(x_ref, t - 1, &eps, schedule)?;
        x = aas_blend(&x_lung, &x_extra, &m_e)?;
        progress(t - 1);
    }
    Ok(x)
}

/// Plain conditional ancestral sampling (no reference, no blending).
pub fn plain_sample(
    model: &dyn NoisePredictor,
    layout: &SemanticLayout,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<LatentVolume> {
    plain_sample_with_progress(model, layout, schedule, cfg, &mut |_| {})
}

pub fn plain_sample_with_progress(
    model: &dyn NoisePredictor,
    layout: &SemanticLayout,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    progress: Progress<'_>,
) -> Result<LatentVolume> {
    check_mode(cfg, SamplerMode::Plain, model)?;
    let dims = layout.dims();
    let n = dims.iter().product();
    let cond = layout_to_channels(layout, cfg.conditioning);
    let mut x = initial_latent(dims, schedule.steps(), cfg);
    for t in (1..=schedule.steps()).rev() {
        let z = step_noise(n, t, cfg);
        x = denoise_step_lung(&x, &cond, model, schedule, &z)?;
        progress(t - 1);
    }
    Ok(x)
}
