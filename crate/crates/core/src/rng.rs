//! Counter-based random streams.
//!
//! Every stochastic draw in the crate comes from a [`Substream`] addressed by
//! `(seed, purpose, id, step)`. Substreams are ChaCha8 streams whose stream
//! number is a hash of the address, so a draw never depends on how many
//! other draws happened before it. This is what makes resumed training and
//! independently scheduled samples reproducible.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::Real;

/// What a substream is used for. Distinct purposes never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    ParamInit = 1,
    Phantom = 2,
    TrainTimestep = 3,
    TrainNoise = 4,
    TrainData = 5,
    InitialLatent = 6,
    StepNoise = 7,
    ReferenceNoise = 8,
    Overlap = 9,
    Auxiliary = 10,
}

/// Root of a family of substreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeedStream {
    pub seed: u64,
}

impl SeedStream {
    pub const fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn substream(&self, purpose: Purpose, id: u64, step: u64) -> Substream {
        Substream::new(self.seed, purpose, id, step)
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Substream {
    rng: ChaCha8Rng,
}

impl Substream {
    pub fn new(seed: u64, purpose: Purpose, id: u64, step: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        let stream = splitmix64(splitmix64(splitmix64(purpose as u64) ^ id) ^ step);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (rejection sampling, no modulo bias).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_normal<T: Real>(&mut self, out: &mut [T]) {
        for v in out {
            *v = T::lit(self.normal());
        }
    }

    pub fn normal_vec<T: Real>(&mut self, len: usize) -> alloc::vec::Vec<T> {
        let mut v = alloc::vec![T::zero(); len];
        self.fill_normal(&mut v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_addressable_and_distinct() {
        let root = SeedStream::new(7);
        let a: alloc::vec::Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(root.substream(Purpose::StepNoise, 0, 3), |s, _| Some(s.next_u64()))
            .collect();
        let mut again = root.substream(Purpose::StepNoise, 0, 3);
        for v in &a {
            assert_eq!(*v, again.next_u64());
        }
        let mut other_step = root.substream(Purpose::StepNoise, 0, 4);
        let mut other_purpose = root.substream(Purpose::ReferenceNoise, 0, 3);
        let mut other_id = root.substream(Purpose::StepNoise, 1, 3);
        assert_ne!(a[0], other_step.next_u64());
        assert_ne!(a[0], other_purpose.next_u64());
        assert_ne!(a[0], other_id.next_u64());
        assert_ne!(a[0], SeedStream::new(8).substream(Purpose::StepNoise, 0, 3).next_u64());
    }

    #[test]
    fn normal_moments() {
        let mut s = SeedStream::new(1).substream(Purpose::Auxiliary, 0, 0);
        let n = 200_000;
        let xs: alloc::vec::Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = SeedStream::new(3).substream(Purpose::Auxiliary, 0, 0);
        let mut seen = [false; 5];
        for _ in 0..1000 {
            let v = s.below(5) as usize;
            seen[v] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }
}
