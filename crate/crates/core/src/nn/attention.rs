//! Single-head spatial self-attention over all voxels of a feature map.

use alloc::vec;
use alloc::vec::Vec;

use super::{matmul, scoped, Conv3d, GroupNorm, ParamLayout};
use crate::{Real, Tensor};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// `y = x + proj(v · softmax(qᵀk / √C)ᵀ)`, with `q`, `k`, `v` pointwise
/// projections of the group-normalized input.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlock {
    pub norm: GroupNorm,
    pub q: Conv3d,
    pub k: Conv3d,
    pub v: Conv3d,
    pub proj: Conv3d,
    pub channels: usize,
}

/// Intermediates kept from the forward pass.
#[derive(Clone, Debug)]
pub struct AttentionTape<T> {
    pub normed: Tensor<T>,
    pub q: Tensor<T>,
    pub k: Tensor<T>,
    pub v: Tensor<T>,
    /// Row-stochastic `N × N` weights; row `i` is the query voxel.
    pub weights: Vec<T>,
    pub mixed: Tensor<T>,
}

impl AttentionBlock {
    pub(crate) fn new(layout: &mut ParamLayout, name: &str, channels: usize, groups: usize) -> Self {
        let norm = GroupNorm::new(layout, &scoped(name, "norm"), channels, groups);
        let q = Conv3d::new(layout, &scoped(name, "q"), channels, channels, 1, 1, false);
        let k = Conv3d::new(layout, &scoped(name, "k"), channels, channels, 1, 1, false);
        let v = Conv3d::new(layout, &scoped(name, "v"), channels, channels, 1, 1, false);
        let proj = Conv3d::new(layout, &scoped(name, "proj"), channels, channels, 1, 1, false);
        Self {
            norm,
            q,
            k,
            v,
            proj,
            channels,
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>) -> Tensor<T> {
        self.forward_tape(p, x).0
    }

    pub fn forward_tape<T: Real>(&self, p: &[T], x: &Tensor<T>) -> (Tensor<T>, AttentionTape<T>) {
        let c = self.channels;
        let n = x.spatial_len();
        let normed = self.norm.forward(p, x);
        let q = self.q.forward(p, &normed);
        let k = self.k.forward(p, &normed);
        let v = self.v.forward(p, &normed);
        let scale = T::lit(1.0 / (c as f64).sqrt());
        let mut weights = vec![T::zero(); n * n];
        matmul(n, n, c, q.data(), true, k.data(), false, &mut weights, T::zero());
        for row in weights.chunks_mut(n) {
            softmax_row(row, scale);
        }
        let mut mixed = Tensor::zeros(c, x.dims());
        matmul(c, n, n, v.data(), false, &weights, true, mixed.data_mut(), T::zero());
        let mut y = self.proj.forward(p, &mixed);
        y.add_assign(x);
        (
            y,
            AttentionTape {
                normed,
                q,
                k,
                v,
                weights,
                mixed,
            },
        )
    }

    pub fn backward<T: Real>(
        &self,
        p: &[T],
        x: &Tensor<T>,
        tape: &AttentionTape<T>,
        dy: &Tensor<T>,
        g: &mut [T],
    ) -> Tensor<T> {
        let c = self.channels;
        let n = x.spatial_len();
        let a = &tape.weights;
        let dmixed = self.proj.backward(p, &tape.mixed, dy, g, true).expect("dx requested");
        let mut dv = Tensor::zeros(c, x.dims());
        matmul(c, n, n, dmixed.data(), false, a, false, dv.data_mut(), T::zero());
        let mut ds = vec![T::zero(); n * n];
        matmul(n, n, c, dmixed.data(), true, tape.v.data(), false, &mut ds, T::zero());
        let scale = T::lit(1.0 / (c as f64).sqrt());
        for (drow, arow) in ds.chunks_mut(n).zip(a.chunks(n)) {
            let dot: T = drow.iter().zip(arow).map(|(&d, &w)| d * w).sum();
            for (d, &w) in drow.iter_mut().zip(arow) {
                *d = w * (*d - dot) * scale;
            }
        }
        let mut dq = Tensor::zeros(c, x.dims());
        matmul(c, n, n, tape.k.data(), false, &ds, true, dq.data_mut(), T::zero());
        let mut dk = Tensor::zeros(c, x.dims());
        matmul(c, n, n, tape.q.data(), false, &ds, false, dk.data_mut(), T::zero());
        let mut dnormed = self.q.backward(p, &tape.normed, &dq, g, true).expect("dx requested");
        dnormed.add_assign(&self.k.backward(p, &tape.normed, &dk, g, true).expect("dx requested"));
        dnormed.add_assign(&self.v.backward(p, &tape.normed, &dv, g, true).expect("dx requested"));
        let mut dx = self.norm.backward(p, x, &dnormed, g);
        dx.add_assign(dy);
        dx
    }
}

fn softmax_row<T: Real>(row: &mut [T], scale: T) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v)) * scale;
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v * scale - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
