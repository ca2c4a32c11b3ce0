//! Layers with explicit forward and backward passes.
//!
//! Layers do not own parameters. They hold [`ParamRange`]s into one flat
//! parameter vector described by a [`ParamLayout`], so the same network can
//! run on raw weights, EMA weights or an `f64` copy without rebuilding.
//! Backward passes take the layer input again (recomputing cheap statistics)
//! and accumulate parameter gradients into a flat vector of the same layout.

mod act;
mod attention;
mod conv;
#[cfg(all(feature = "std", target_arch = "x86_64"))]
mod conv_x86;
mod gemm;
mod linear;
mod norm;

pub use act::{silu, silu_backward, silu_backward_slice, silu_in_place, silu_slice};
pub use attention::{AttentionBlock, AttentionTape};
pub use conv::{upsample_nearest, upsample_nearest_backward, Conv3d};
pub use linear::Linear;
pub use norm::GroupNorm;

pub(crate) use gemm::matmul;

use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::{Purpose, SeedStream};
use crate::Real;

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// How a parameter tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with variance `1 / fan_in`.
    Fan(usize),
    /// Zero at initialization; drawn like `Fan` by [`ParamLayout::randomize`].
    ZeroFan(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> ParamRange {
        ParamRange {
            offset: self.offset,
            len: self.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamRange {
    pub offset: usize,
    pub len: usize,
}

impl ParamRange {
    #[inline]
    pub fn of<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn of_mut<'a, T>(&self, p: &'a mut [T]) -> &'a mut [T] {
        &mut p[self.offset..self.offset + self.len]
    }
}

/// Ordered, named description of a flat parameter vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(&mut self, name: String, shape: &[usize], init: Init) -> ParamRange {
        let spec = ParamSpec {
            name,
            shape: shape.to_vec(),
            offset: self.total,
            init,
        };
        let range = spec.range();
        self.total += range.len;
        self.specs.push(spec);
        range
    }

    /// Total scalar count.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Fresh parameters: variance-scaling normal draws for weights, zeros and
    /// ones where requested. Each tensor has its own substream.
    pub fn initialize<T: Real>(&self, seed: u64) -> Vec<T> {
        let root = SeedStream::new(seed);
        let mut out = alloc::vec![T::zero(); self.total];
        for (i, spec) in self.specs.iter().enumerate() {
            let dst = spec.range().of_mut(&mut out);
            match spec.init {
                Init::Zeros | Init::ZeroFan(_) => {}
                Init::Ones => dst.fill(T::one()),
                Init::Fan(fan_in) => {
                    let std = 1.0 / (fan_in.max(1) as f64).sqrt();
                    let mut s = root.substream(Purpose::ParamInit, i as u64, 0);
                    for v in dst {
                        *v = T::lit(std * s.normal());
                    }
                }
            }
        }
        out
    }

    /// Fully random parameters for tests and stress runs: every weight is
    /// fan-scaled noise (including zero-initialized output layers), biases
    /// and norm offsets get small noise, norm scales jitter around one.
    pub fn randomize<T: Real>(&self, seed: u64) -> Vec<T> {
        let root = SeedStream::new(seed);
        let mut out = alloc::vec![T::zero(); self.total];
        for (i, spec) in self.specs.iter().enumerate() {
            let (center, std) = match spec.init {
                Init::Zeros => (0.0, 0.1),
                Init::Ones => (1.0, 0.1),
                Init::Fan(f) | Init::ZeroFan(f) => (0.0, 1.0 / (f.max(1) as f64).sqrt()),
            };
            let mut s = root.substream(Purpose::ParamInit, i as u64, 1);
            for v in spec.range().of_mut(&mut out) {
                *v = T::lit(center + std * s.normal());
            }
        }
        out
    }
}

pub(crate) fn scoped(prefix: &str, name: &str) -> String {
    let mut s = String::with_capacity(prefix.len() + name.len() + 1);
    s.push_str(prefix);
    s.push('.');
    s.push_str(name);
    s
}
