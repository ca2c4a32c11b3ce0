//! Diffusion noise schedules.
//!
//! A [`NoiseSchedule`] stores `beta_t`, `alpha_t = 1 - beta_t`, the cumulative
//! products `alpha_bar_t` and `sigma_t = sqrt(beta_t)` in double precision.
//! Step `t = 0` is the clean volume and `alpha_bar_0 = 1` is stored
//! explicitly.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::{Error, Result};

/// Offset `s` used by the standard cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;
/// Upper clip for cosine-schedule betas.
pub const COSINE_BETA_MAX: f64 = 0.999;
/// Step count of the reference configuration.
pub const DEFAULT_STEPS: usize = 250;

/// Self-describing schedule recipe; this is what checkpoints store.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)
)]
pub enum ScheduleDescriptor {
    Cosine {
        #[cfg_attr(feature = "serde", serde(rename = "T"))]
        steps: usize,
        s: f64,
        beta_max: f64,
    },
    Linear {
        #[cfg_attr(feature = "serde", serde(rename = "T"))]
        steps: usize,
        beta_start: f64,
        beta_end: f64,
    },
}

impl Default for ScheduleDescriptor {
    fn default() -> Self {
        ScheduleDescriptor::Cosine {
            steps: DEFAULT_STEPS,
            s: COSINE_OFFSET,
            beta_max: COSINE_BETA_MAX,
        }
    }
}

impl ScheduleDescriptor {
    pub fn steps(&self) -> usize {
        match *self {
            ScheduleDescriptor::Cosine { steps, .. } | ScheduleDescriptor::Linear { steps, .. } => {
                steps
            }
        }
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        match *self {
            ScheduleDescriptor::Cosine { steps, s, beta_max } => {
                NoiseSchedule::cosine(steps, s, beta_max)
            }
            ScheduleDescriptor::Linear {
                steps,
                beta_start,
                beta_end,
            } => NoiseSchedule::linear(steps, beta_start, beta_end),
        }
    }
}

/// Immutable schedule; index `t` runs over `1..=T` for per-step quantities and
/// over `0..=T` for `alpha_bar`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    descriptor: ScheduleDescriptor,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
}

/// `cos^2(((t/T + s) / (1 + s)) * pi/2)`.
fn cosine_f(t: f64, steps: f64, s: f64) -> f64 {
    let c = (((t / steps + s) / (1.0 + s)) * FRAC_PI_2).cos();
    c * c
}

impl NoiseSchedule {
    /// Cosine schedule: `alpha_bar_t = f(t) / f(0)`, `beta_t = 1 -
    /// alpha_bar_t / alpha_bar_{t-1}` clipped to `beta_max`. The stored
    /// `alpha_bar` is the cumulative product of the clipped alphas, so it
    /// departs from `f(t)/f(0)` only at steps where the clip engages (in
    /// practice the terminal step, where `f(T) = 0`).
    pub fn cosine(steps: usize, s: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("T", "step count must be at least 1"));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::config("s", "offset must lie in (0, 1)"));
        }
        if !(beta_max > 0.0 && beta_max < 1.0) {
            return Err(Error::config("beta_max", "clip bound must lie in (0, 1)"));
        }
        let tf = steps as f64;
        let f0 = cosine_f(0.0, tf, s);
        let betas = (1..=steps)
            .map(|t| {
                let prev = cosine_f((t - 1) as f64, tf, s) / f0;
                let cur = cosine_f(t as f64, tf, s) / f0;
                (1.0 - cur / prev).min(beta_max)
            })
            .collect();
        Self::from_betas(
            ScheduleDescriptor::Cosine { steps, s, beta_max },
            betas,
        )
    }

    /// Linear betas from `beta_start` to `beta_end` over `t = 1..=T`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("T", "step count must be at least 1"));
        }
        if !(beta_start > 0.0 && beta_start < 1.0) {
            return Err(Error::config("beta_start", "must lie in (0, 1)"));
        }
        if !(beta_end > 0.0 && beta_end < 1.0) {
            return Err(Error::config("beta_end", "must lie in (0, 1)"));
        }
        if beta_start > beta_end {
            return Err(Error::config("beta_start", "must not exceed beta_end"));
        }
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(
            ScheduleDescriptor::Linear {
                steps,
                beta_start,
                beta_end,
            },
            betas,
        )
    }

    fn from_betas(descriptor: ScheduleDescriptor, betas: Vec<f64>) -> Result<Self> {
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::config(
                "betas",
                alloc::format!("beta {b} outside (0, 1); schedule is degenerate"),
            ));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let sigmas = betas.iter().map(|b| b.sqrt()).collect();
        Ok(Self {
            descriptor,
            betas,
            alphas,
            alpha_bars,
            sigmas,
        })
    }

    pub fn descriptor(&self) -> ScheduleDescriptor {
        self.descriptor
    }

    /// `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `alpha_bar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// All `T + 1` cumulative products, starting with `alpha_bar_0 = 1`.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            Err(Error::StepRange {
                t,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }
}
