//! Training: uniform time sampling, forward noising, L1 noise-prediction
//! loss, Adam, and an EMA shadow of the weights.
//!
//! Every random draw is addressed by `(seed, step, batch element)`, so a run
//! restarted from a checkpoint at step `k` continues exactly as the
//! uninterrupted run would have.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{layout_to_channels, Conditioning, SemanticLayout, Volume};
use crate::denoiser::{DenoiserConfig, NoisePredictor, UNet};
use crate::diffusion::mix;
use crate::rng::{Purpose, SeedStream};
use crate::schedule::{NoiseSchedule, ScheduleDescriptor};
use crate::{Error, Real, Result, Tensor};

#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct TrainConfig {
    pub lr: f64,
    pub ema_decay: f64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub schedule: ScheduleDescriptor,
    pub seed: u64,
    /// Layout channels fed to the denoiser; fixes its input width.
    pub conditioning: Conditioning,
    /// Steps between checkpoints written by the driver loop (0 = only at the end).
    pub checkpoint_every: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            ema_decay: 0.995,
            total_steps: 1000,
            batch_size: 1,
            schedule: ScheduleDescriptor::default(),
            seed: 0,
            conditioning: Conditioning::LungAndNodule,
            checkpoint_every: 500,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", format!("must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::config("ema_decay", format!("must lie in [0, 1), got {}", self.ema_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::config("adam", "need 0 <= beta1, beta2 < 1 and eps > 0"));
        }
        Ok(())
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: Vec<f32>,
    pub ema: Vec<f32>,
    pub adam_m: Vec<f32>,
    pub adam_v: Vec<f32>,
    /// Completed steps.
    pub step: u64,
    /// Root of the counter-based random stream; with `step` it is the full
    /// stream state.
    pub seed: u64,
}

impl TrainState {
    pub fn new(params: Vec<f32>, seed: u64) -> Self {
        let n = params.len();
        Self {
            ema: params.clone(),
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
            seed,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.params, &self.ema, &self.adam_m, &self.adam_v]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// `ema = decay * ema + (1 - decay) * params`.
pub fn ema_update<T: Real>(ema: &mut [T], params: &[T], decay: f64) -> Result<()> {
    if ema.len() != params.len() {
        return Err(Error::shape("ema parameters", &[params.len()], &[ema.len()]));
    }
    let d = T::lit(decay);
    let e = T::lit(1.0 - decay);
    for (s, &p) in ema.iter_mut().zip(params) {
        *s = d * *s + e * p;
    }
    Ok(())
}

/// One Adam update; `step` is the 1-based update count used for bias
/// correction.
pub fn adam_update(params: &mut [f32], m: &mut [f32], v: &mut [f32], grad: &[f32], lr: f64, cfg: &AdamConfig, step: u64) {
    let c1 = 1.0 - cfg.beta1.powi(step.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - cfg.beta2.powi(step.min(i32::MAX as u64) as i32);
    for (((p, m), v), &g) in params.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(grad) {
        let g = g as f64;
        let mn = cfg.beta1 * *m as f64 + (1.0 - cfg.beta1) * g;
        let vn = cfg.beta2 * *v as f64 + (1.0 - cfg.beta2) * g * g;
        *m = mn as f32;
        *v = vn as f32;
        *p = (*p as f64 - lr * (mn / c1) / ((vn / c2).sqrt() + cfg.eps)) as f32;
    }
}

/// Time step and noise for one batch element of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainDraw {
    pub t: usize,
    pub eps: Vec<f32>,
}

pub fn training_draw(seed: u64, step: u64, element: usize, voxels: usize, steps: usize) -> TrainDraw {
    let root = SeedStream::new(seed);
    let t = 1 + root.substream(Purpose::TrainTimestep, element as u64, step).below(steps as u64) as usize;
    let eps = root.substream(Purpose::TrainNoise, element as u64, step).normal_vec(voxels);
    TrainDraw { t, eps }
}

/// Dataset indices for one step, drawn with replacement.
pub fn batch_indices(seed: u64, step: u64, batch_size: usize, dataset_len: usize) -> Vec<usize> {
    let mut s = SeedStream::new(seed).substream(Purpose::TrainData, 0, step);
    (0..batch_size).map(|_| s.below(dataset_len as u64) as usize).collect()
}

/// `forward_diffuse(x0, t, eps) ⊕ layout channels`.
pub fn noisy_input(x0: &Volume, layout: &SemanticLayout, conditioning: Conditioning, draw: &TrainDraw, schedule: &NoiseSchedule) -> Result<Tensor<f32>> {
    if layout.dims() != x0.dims() {
        return Err(Error::shape("training layout", &x0.dims(), &layout.dims()));
    }
    if draw.eps.len() != x0.len() {
        return Err(Error::shape("training noise", &[x0.len()], &[draw.eps.len()]));
    }
    let mut latent = Tensor::zeros(1, x0.dims());
    mix(x0.values(), &draw.eps, schedule.alpha_bar(draw.t), latent.data_mut());
    Tensor::concat(&[&latent, &layout_to_channels(layout, conditioning)])
}

/// `Σ |ε − ε'|` and its subgradient (`sign(ε' − ε) · scale`, zero at ties).
pub fn l1_loss_and_grad<T: Real>(pred: &[T], eps: &[f32], scale: T) -> (f64, Vec<T>) {
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(eps)
        .map(|(&p, &e)| {
            let d = p.as_f64() - e as f64;
            sum += d.abs();
            if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                T::zero()
            }
        })
        .collect();
    (sum, grad)
}

/// Mean L1 noise-prediction loss for an arbitrary predictor with the same
/// draws `train_step` would make at `step`. No parameters change.
pub fn noise_loss(
    model: &dyn NoisePredictor,
    batch: &[(&Volume, &SemanticLayout)],
    schedule: &NoiseSchedule,
    conditioning: Conditioning,
    seed: u64,
    step: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::config("batch_size", "empty batch"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (b, (x0, layout)) in batch.iter().enumerate() {
        let draw = training_draw(seed, step, b, x0.len(), schedule.steps());
        let input = noisy_input(x0, layout, conditioning, &draw, schedule)?;
        let pred = model.predict_noise(&input, draw.t)?;
        total += l1_loss_and_grad(pred.data(), &draw.eps, 1.0f32).0;
        count += draw.eps.len();
    }
    Ok(total / count as f64)
}

/// The network plan, schedule and hyperparameters of one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    net: UNet,
    schedule: NoiseSchedule,
    config: TrainConfig,
}

impl Trainer {
    pub fn new(denoiser: &DenoiserConfig, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if denoiser.in_channels != 1 + config.conditioning.channels() {
            return Err(Error::config(
                "in_channels",
                format!(
                    "conditioning `{}` needs {} input channels, denoiser has {}",
                    config.conditioning.as_str(),
                    1 + config.conditioning.channels(),
                    denoiser.in_channels
                ),
            ));
        }
        Ok(Self {
            net: UNet::new(denoiser)?,
            schedule: config.schedule.build()?,
            config: config.clone(),
        })
    }

    pub fn net(&self) -> &UNet {
        &self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Fresh state: initialized weights, EMA equal to them, zero moments.
    pub fn init_state(&self) -> TrainState {
        TrainState::new(self.net.layout().initialize(self.config.seed), self.config.seed)
    }

    fn check_example(&self, x0: &Volume, layout: &SemanticLayout) -> Result<()> {
        let r = self.net.config().resolution;
        if x0.dims() != [r; 3] {
            return Err(Error::shape("training volume", &[r, r, r], &x0.dims()));
        }
        if layout.dims() != [r; 3] {
            return Err(Error::shape("training layout", &[r, r, r], &layout.dims()));
        }
        Ok(())
    }

    /// Loss and gradient of the mean L1 objective at `params` for the draws
    /// of `step`. Generic so gradients can be checked in `f64`.
    pub fn loss_and_grad<T: Real>(
        &self,
        params: &[T],
        batch: &[(&Volume, &SemanticLayout)],
        seed: u64,
        step: u64,
    ) -> Result<(f64, Vec<T>)> {
        if batch.is_empty() {
            return Err(Error::config("batch_size", "empty batch"));
        }
        let mut grad = vec![T::zero(); params.len()];
        let mut total = 0.0;
        let voxels = batch[0].0.len();
        let scale = T::lit(1.0 / (voxels * batch.len()) as f64);
        for (b, (x0, layout)) in batch.iter().enumerate() {
            self.check_example(x0, layout)?;
            let draw = training_draw(seed, step, b, voxels, self.schedule.steps());
            let input: Tensor<T> = noisy_input(x0, layout, self.config.conditioning, &draw, &self.schedule)?.cast();
            let (pred, tape) = self.net.forward_tape(params, &input, draw.t)?;
            let (sum, dy) = l1_loss_and_grad(pred.data(), &draw.eps, scale);
            total += sum;
            let dy = Tensor::from_vec(1, pred.dims(), dy)?;
            self.net.backward(params, &tape, &dy, &mut grad)?;
        }
        Ok((total / (voxels * batch.len()) as f64, grad))
    }

    /// One optimizer step on an explicit batch; returns the batch loss.
    pub fn train_step(&self, state: &mut TrainState, batch: &[(&Volume, &SemanticLayout)]) -> Result<f64> {
        let health = |context| Error::NumericHealth {
            context,
            step: Some(state.step),
        };
        let (loss, grad) = self.loss_and_grad(&state.params, batch, state.seed, state.step)?;
        if !loss.is_finite() {
            return Err(health("training loss"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(health("gradient"));
        }
        let step = state.step + 1;
        adam_update(
            &mut state.params,
            &mut state.adam_m,
            &mut state.adam_v,
            &grad,
            self.config.lr,
            &self.config.adam,
            step,
        );
        if state.params.iter().any(|p| !p.is_finite()) {
            return Err(health("parameters"));
        }
        ema_update(&mut state.ema, &state.params, self.config.ema_decay)?;
        state.step = step;
        Ok(loss)
    }

    /// One step on a batch drawn from `dataset` by the step-keyed stream.
    pub fn train_step_on(&self, state: &mut TrainState, dataset: &[(Volume, SemanticLayout)]) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::InsufficientData {
                what: "training dataset",
                needed: 1,
                got: 0,
            });
        }
        let batch: Vec<(&Volume, &SemanticLayout)> = batch_indices(state.seed, state.step, self.config.batch_size, dataset.len())
            .into_iter()
            .map(|i| (&dataset[i].0, &dataset[i].1))
            .collect();
        self.train_step(state, &batch)
    }
}
