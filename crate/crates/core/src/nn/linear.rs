use alloc::vec;
use alloc::vec::Vec;

use super::{scoped, Init, ParamLayout, ParamRange};
use crate::Real;

/// Dense layer `y = W x + b` with `W` stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamRange,
    pub bias: ParamRange,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub(crate) fn new(layout: &mut ParamLayout, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = layout.add(scoped(name, "weight"), &[fan_out, fan_in], Init::Fan(fan_in));
        let bias = layout.add(scoped(name, "bias"), &[fan_out], Init::Zeros);
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.fan_in);
        let w = self.weight.of(p);
        self.bias
            .of(p)
            .iter()
            .enumerate()
            .map(|(o, &b)| {
                let row = &w[o * self.fan_in..(o + 1) * self.fan_in];
                b + row.iter().zip(x).map(|(&a, &v)| a * v).sum::<T>()
            })
            .collect()
    }

    pub fn backward<T: Real>(&self, p: &[T], x: &[T], dy: &[T], g: &mut [T]) -> Vec<T> {
        let w = self.weight.of(p);
        for (acc, &d) in self.bias.of_mut(g).iter_mut().zip(dy) {
            *acc += d;
        }
        let gw = self.weight.of_mut(g);
        let mut dx = vec![T::zero(); self.fan_in];
        for (o, &d) in dy.iter().enumerate() {
            let row = o * self.fan_in..(o + 1) * self.fan_in;
            for ((acc, &v), (dxi, &wv)) in gw[row.clone()].iter_mut().zip(x).zip(dx.iter_mut().zip(&w[row])) {
                *acc += d * v;
                *dxi += d * wv;
            }
        }
        dx
    }
}
