//! 3D U-Net noise predictor.
//!
//! The network takes the noisy latent concatenated with binary layout
//! channels and a time step, and predicts the injected noise. Topology per
//! level: residual block, optional self-attention, then a strided
//! convolution down; the decoder mirrors this with skip concatenation and
//! nearest-neighbor upsampling followed by a convolution. Time steps enter
//! through a sinusoidal encoding and a small MLP whose output biases every
//! residual block.

mod blocks;
mod unet;

pub use blocks::{time_embedding, ResBlock, ResTape, TimeEncoder, TimeTape};
pub use unet::{Tape, UNet};

use alloc::format;
use alloc::vec::Vec;

use crate::nn::ParamLayout;
use crate::{Error, Real, Result, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct DenoiserConfig {
    /// Cube side length in voxels.
    pub resolution: usize,
    /// Latent channel plus layout channels.
    pub in_channels: usize,
    pub base_width: usize,
    pub channel_multipliers: Vec<usize>,
    /// Levels (0 = full resolution) that carry a self-attention block.
    pub attention_levels: Vec<usize>,
    pub time_embed_dim: usize,
    pub groups: usize,
    /// Kernel of the convolution after nearest upsampling (1 or 3). The desk
    /// preset uses 1 to keep a training step under half a second on one core.
    pub upsample_kernel: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DenoiserConfig {
    /// CPU-trainable default at 32³.
    pub fn desk() -> Self {
        Self {
            resolution: 32,
            in_channels: 3,
            base_width: 16,
            channel_multipliers: alloc::vec![1, 2, 4],
            attention_levels: alloc::vec![2],
            time_embed_dim: 64,
            groups: 8,
            upsample_kernel: 1,
        }
    }

    /// Smallest meaningful network, used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            resolution: 8,
            in_channels: 3,
            base_width: 4,
            channel_multipliers: alloc::vec![1],
            attention_levels: alloc::vec![0],
            time_embed_dim: 8,
            groups: 2,
            upsample_kernel: 3,
        }
    }

    /// 128³ instance with a four-level ladder.
    pub fn full_scale() -> Self {
        Self {
            resolution: 128,
            in_channels: 3,
            base_width: 32,
            channel_multipliers: alloc::vec![1, 2, 4, 8],
            attention_levels: alloc::vec![3],
            time_embed_dim: 128,
            groups: 8,
            upsample_kernel: 3,
        }
    }

    pub fn levels(&self) -> usize {
        self.channel_multipliers.len()
    }

    /// Channel width per level.
    pub fn widths(&self) -> Vec<usize> {
        self.channel_multipliers.iter().map(|m| m * self.base_width).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.levels();
        if levels == 0 {
            return Err(Error::config("channel_multipliers", "at least one level is required"));
        }
        if self.channel_multipliers.contains(&0) {
            return Err(Error::config("channel_multipliers", "multipliers must be positive"));
        }
        if self.base_width == 0 {
            return Err(Error::config("base_width", "must be positive"));
        }
        let factor = 1usize << (levels - 1);
        if self.resolution == 0 || self.resolution % factor != 0 {
            return Err(Error::config(
                "resolution",
                format!("{} is not divisible by 2^(levels-1) = {factor}", self.resolution),
            ));
        }
        if self.in_channels < 2 {
            return Err(Error::config(
                "in_channels",
                format!("need the latent plus at least one layout channel, got {}", self.in_channels),
            ));
        }
        if let Some(&l) = self.attention_levels.iter().find(|&&l| l >= levels) {
            return Err(Error::config("attention_levels", format!("level {l} does not exist ({levels} levels)")));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return Err(Error::config("time_embed_dim", format!("must be positive and even, got {}", self.time_embed_dim)));
        }
        if self.groups == 0 || self.widths().iter().any(|w| w % self.groups != 0) {
            return Err(Error::config(
                "groups",
                format!("{} does not divide every level width {:?}", self.groups, self.widths()),
            ));
        }
        if self.upsample_kernel != 1 && self.upsample_kernel != 3 {
            return Err(Error::config("upsample_kernel", format!("must be 1 or 3, got {}", self.upsample_kernel)));
        }
        Ok(())
    }
}

/// Anything that predicts the noise in a conditioned latent. The sampler is
/// written against this so tests can plug in analytic stand-ins.
pub trait NoisePredictor {
    fn in_channels(&self) -> usize;

    /// `input` is `[in_channels, D, H, W]`; the result has one channel.
    fn predict_noise(&self, input: &Tensor<f32>, t: usize) -> Result<Tensor<f32>>;
}

/// A U-Net together with one set of weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser<T> {
    net: UNet,
    params: Vec<T>,
}

impl<T: Real> Denoiser<T> {
    /// Freshly initialized network (output layer zeroed).
    pub fn new(config: &DenoiserConfig, seed: u64) -> Result<Self> {
        let net = UNet::new(config)?;
        let params = net.layout().initialize(seed);
        Ok(Self { net, params })
    }

    /// Network with every parameter drawn at random, so the untrained
    /// prediction is far from zero.
    pub fn random(config: &DenoiserConfig, seed: u64) -> Result<Self> {
        let net = UNet::new(config)?;
        let params = net.layout().randomize(seed);
        Ok(Self { net, params })
    }

    pub fn from_params(config: &DenoiserConfig, params: Vec<T>) -> Result<Self> {
        let net = UNet::new(config)?;
        if params.len() != net.layout().len() {
            return Err(Error::shape("denoiser parameters", &[net.layout().len()], &[params.len()]));
        }
        Ok(Self { net, params })
    }

    pub fn config(&self) -> &DenoiserConfig {
        self.net.config()
    }

    pub fn net(&self) -> &UNet {
        &self.net
    }

    pub fn layout(&self) -> &ParamLayout {
        self.net.layout()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<T> {
        self.params
    }

    pub fn cast<U: Real>(&self) -> Denoiser<U> {
        Denoiser {
            net: self.net.clone(),
            params: self.params.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn forward(&self, input: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        let out = self.net.forward(&self.params, input, t)?;
        if !out.is_finite() {
            return Err(Error::NumericHealth {
                context: "denoiser output",
                step: Some(t as u64),
            });
        }
        Ok(out)
    }
}

impl NoisePredictor for Denoiser<f32> {
    fn in_channels(&self) -> usize {
        self.config().in_channels
    }

    fn predict_noise(&self, input: &Tensor<f32>, t: usize) -> Result<Tensor<f32>> {
        self.forward(input, t)
    }
}

#[cfg(test)]
mod tests;
