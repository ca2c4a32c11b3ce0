use alloc::vec::Vec;

use crate::{Real, Tensor};

#[inline(always)]
fn sigmoid<T: Real>(x: T) -> T {
    x.sigmoid()
}

pub fn silu_slice<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

/// Gradient of `silu` given the pre-activation `x`.
pub fn silu_backward_slice<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let s = sigmoid(v);
            g * s * (T::one() + v * (T::one() - s))
        })
        .collect()
}

pub fn silu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        *v = *v * sigmoid(*v);
    }
}

pub fn silu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_vec(x.channels(), x.dims(), silu_slice(x.data())).expect("same shape")
}

pub fn silu_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    Tensor::from_vec(x.channels(), x.dims(), silu_backward_slice(x.data(), dy.data())).expect("same shape")
}
