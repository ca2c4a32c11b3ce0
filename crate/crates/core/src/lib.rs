//! Core of a layout-guided volumetric denoising-diffusion engine.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Everything here is pure computation: noise schedules, the forward
//! process and the anatomically aware sampler, a 3D U-Net noise predictor with
//! hand-written backpropagation, the training step, a procedural thorax
//! phantom, and the evaluation metrics. File formats, checkpoints and the CLI
//! live in the `thoraxdiff` companion crate.
//!
//! Layout conventions used throughout:
//!
//! * grids are dense, row-major, `[D, H, W]` with `z` slowest;
//! * multi-channel tensors are channel-major (`[C, D, H, W]`);
//! * time steps run `1..=T`, with `t = 0` denoting the clean volume.

#![cfg_attr(not(feature = "std"), no_std)]
// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod denoiser;
pub mod diffusion;
mod error;
pub mod metrics;
pub mod nn;
pub mod real;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
