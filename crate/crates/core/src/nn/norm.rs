use alloc::vec::Vec;

use super::{scoped, Init, ParamLayout, ParamRange};
use crate::{Real, Tensor};

#[cfg(not(feature = "std"))]
use num_traits::Float;

pub const GROUP_NORM_EPS: f64 = 1e-5;

/// Group normalization with per-channel affine transform.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupNorm {
    pub gamma: ParamRange,
    pub beta: ParamRange,
    pub channels: usize,
    pub groups: usize,
}

impl GroupNorm {
    pub(crate) fn new(layout: &mut ParamLayout, name: &str, channels: usize, groups: usize) -> Self {
        assert!(groups > 0 && channels % groups == 0, "{channels} channels in {groups} groups");
        let gamma = layout.add(scoped(name, "gamma"), &[channels], Init::Ones);
        let beta = layout.add(scoped(name, "beta"), &[channels], Init::Zeros);
        Self {
            gamma,
            beta,
            channels,
            groups,
        }
    }

    /// Per-group `(mean, 1 / std)`, accumulated in `f64`.
    fn stats<T: Real>(&self, x: &Tensor<T>) -> Vec<(f64, f64)> {
        let per = self.channels / self.groups * x.spatial_len();
        x.data()
            .chunks(per)
            .map(|grp| {
                let n = grp.len() as f64;
                let mean = grp.iter().map(|v| v.as_f64()).sum::<f64>() / n;
                let var = grp.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
                (mean, 1.0 / (var + GROUP_NORM_EPS).sqrt())
            })
            .collect()
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.channels(), self.channels, "group norm channels");
        let stats = self.stats(x);
        let cpg = self.channels / self.groups;
        let (gamma, beta) = (self.gamma.of(p), self.beta.of(p));
        let mut y = x.clone();
        for c in 0..self.channels {
            let (mean, inv) = stats[c / cpg];
            let (mean, inv) = (T::lit(mean), T::lit(inv));
            let (gc, bc) = (gamma[c], beta[c]);
            for v in y.channel_mut(c) {
                *v = (*v - mean) * inv * gc + bc;
            }
        }
        y
    }

    #[allow(clippy::needless_range_loop)]
    pub fn backward<T: Real>(&self, p: &[T], x: &Tensor<T>, dy: &Tensor<T>, g: &mut [T]) -> Tensor<T> {
        let stats = self.stats(x);
        let cpg = self.channels / self.groups;
        let gamma = self.gamma.of(p);
        let n = x.spatial_len();
        let mut dgamma = alloc::vec![0.0f64; self.channels];
        let mut dbeta = alloc::vec![0.0f64; self.channels];
        let mut dx = Tensor::zeros(self.channels, x.dims());
        for grp in 0..self.groups {
            let (mean, inv) = stats[grp];
            // Means of dxhat and dxhat * xhat over the group.
            let mut m1 = 0.0f64;
            let mut m2 = 0.0f64;
            for c in grp * cpg..(grp + 1) * cpg {
                let gc = gamma[c].as_f64();
                for (&xv, &d) in x.channel(c).iter().zip(dy.channel(c)) {
                    let d = d.as_f64();
                    let xhat = (xv.as_f64() - mean) * inv;
                    dgamma[c] += d * xhat;
                    dbeta[c] += d;
                    m1 += d * gc;
                    m2 += d * gc * xhat;
                }
            }
            let count = (cpg * n) as f64;
            m1 /= count;
            m2 /= count;
            for c in grp * cpg..(grp + 1) * cpg {
                let gc = gamma[c].as_f64();
                let xs = x.channel(c);
                let ds = dy.channel(c);
                for ((o, &xv), &d) in dx.channel_mut(c).iter_mut().zip(xs).zip(ds) {
                    let xhat = (xv.as_f64() - mean) * inv;
                    *o = T::lit(inv * (d.as_f64() * gc - m1 - xhat * m2));
                }
            }
        }
        for (acc, v) in self.gamma.of_mut(g).iter_mut().zip(&dgamma) {
            *acc += T::lit(*v);
        }
        for (acc, v) in self.beta.of_mut(g).iter_mut().zip(&dbeta) {
            *acc += T::lit(*v);
        }
        dx
    }
}
