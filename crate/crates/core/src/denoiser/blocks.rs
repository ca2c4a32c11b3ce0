use alloc::vec::Vec;

use num_traits::Float;

use crate::nn::{scoped, silu, silu_backward, silu_backward_slice, silu_in_place, silu_slice, Conv3d, GroupNorm, Linear, ParamLayout};
use crate::{Error, Real, Result, Tensor};

/// Raw sinusoidal encoding of a time step: entries `2i` and `2i + 1` hold
/// `sin(t·f_i)` and `cos(t·f_i)` with `f_i = 10000^(-i / (dim / 2))`.
pub fn time_embedding(t: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::config("time_embed_dim", alloc::format!("must be a positive even number, got {dim}")));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let f = Float::powf(10000.0f64, -(i as f64) / half as f64);
        out.push(Float::sin(t * f));
        out.push(Float::cos(t * f));
    }
    Ok(out)
}

/// Learned part of the time encoder: `Linear → SiLU → Linear`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeEncoder {
    pub dim: usize,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Clone, Debug)]
pub struct TimeTape<T> {
    raw: Vec<T>,
    hidden: Vec<T>,
}

impl TimeEncoder {
    pub(crate) fn new(layout: &mut ParamLayout, name: &str, dim: usize) -> Self {
        Self {
            dim,
            fc1: Linear::new(layout, &scoped(name, "fc1"), dim, dim),
            fc2: Linear::new(layout, &scoped(name, "fc2"), dim, dim),
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], t: usize) -> Result<(Vec<T>, TimeTape<T>)> {
        let raw: Vec<T> = time_embedding(t as f64, self.dim)?.into_iter().map(T::lit).collect();
        let hidden = self.fc1.forward(p, &raw);
        let out = self.fc2.forward(p, &silu_slice(&hidden));
        Ok((out, TimeTape { raw, hidden }))
    }

    pub fn backward<T: Real>(&self, p: &[T], tape: &TimeTape<T>, dy: &[T], g: &mut [T]) {
        let act = silu_slice(&tape.hidden);
        let dact = self.fc2.backward(p, &act, dy, g);
        let dhidden = silu_backward_slice(&tape.hidden, &dact);
        self.fc1.backward(p, &tape.raw, &dhidden, g);
    }
}

/// Residual block: `GN → SiLU → conv → (+ time bias) → GN → SiLU → conv`,
/// plus an identity or pointwise shortcut.
#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock {
    pub norm1: GroupNorm,
    pub conv1: Conv3d,
    pub time: Linear,
    pub norm2: GroupNorm,
    pub conv2: Conv3d,
    pub shortcut: Option<Conv3d>,
    pub cin: usize,
    pub cout: usize,
}

#[derive(Clone, Debug)]
pub struct ResTape<T> {
    n1: Tensor<T>,
    a1: Tensor<T>,
    h: Tensor<T>,
    n2: Tensor<T>,
    a2: Tensor<T>,
}

impl ResBlock {
    pub(crate) fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize, temb: usize, groups: usize) -> Self {
        Self {
            norm1: GroupNorm::new(layout, &scoped(name, "norm1"), cin, groups),
            conv1: Conv3d::new(layout, &scoped(name, "conv1"), cin, cout, 3, 1, false),
            time: Linear::new(layout, &scoped(name, "time"), temb, cout),
            norm2: GroupNorm::new(layout, &scoped(name, "norm2"), cout, groups),
            conv2: Conv3d::new(layout, &scoped(name, "conv2"), cout, cout, 3, 1, false),
            shortcut: (cin != cout).then(|| Conv3d::new(layout, &scoped(name, "shortcut"), cin, cout, 1, 1, false)),
            cin,
            cout,
        }
    }

    /// `temb` is the already-activated time embedding shared by all blocks.
    pub fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>, temb: &[T]) -> Result<(Tensor<T>, ResTape<T>)> {
        if x.channels() != self.cin {
            return Err(Error::shape("residual block input", &[self.cin], &[x.channels()]));
        }
        if temb.len() != self.time.fan_in {
            return Err(Error::shape("residual block time embedding", &[self.time.fan_in], &[temb.len()]));
        }
        let n1 = self.norm1.forward(p, x);
        let a1 = silu(&n1);
        let mut h = self.conv1.forward(p, &a1);
        for (c, b) in self.time.forward(p, temb).into_iter().enumerate() {
            for v in h.channel_mut(c) {
                *v += b;
            }
        }
        let n2 = self.norm2.forward(p, &h);
        let a2 = silu(&n2);
        let mut y = self.conv2.forward(p, &a2);
        match &self.shortcut {
            Some(sc) => y.add_assign(&sc.forward(p, x)),
            None => y.add_assign(x),
        }
        Ok((y, ResTape { n1, a1, h, n2, a2 }))
    }

    /// Same output as [`ResBlock::forward`] without keeping activations.
    pub fn infer<T: Real>(&self, p: &[T], x: &Tensor<T>, temb: &[T]) -> Result<Tensor<T>> {
        if x.channels() != self.cin {
            return Err(Error::shape("residual block input", &[self.cin], &[x.channels()]));
        }
        if temb.len() != self.time.fan_in {
            return Err(Error::shape("residual block time embedding", &[self.time.fan_in], &[temb.len()]));
        }
        let mut a = self.norm1.forward(p, x);
        silu_in_place(a.data_mut());
        let mut h = self.conv1.forward(p, &a);
        drop(a);
        for (c, b) in self.time.forward(p, temb).into_iter().enumerate() {
            for v in h.channel_mut(c) {
                *v += b;
            }
        }
        let mut a = self.norm2.forward(p, &h);
        drop(h);
        silu_in_place(a.data_mut());
        let mut y = self.conv2.forward(p, &a);
        drop(a);
        match &self.shortcut {
            Some(sc) => y.add_assign(&sc.forward(p, x)),
            None => y.add_assign(x),
        }
        Ok(y)
    }

    /// Returns the input gradient and accumulates the time-embedding
    /// gradient into `dtemb`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Real>(
        &self,
        p: &[T],
        x: &Tensor<T>,
        temb: &[T],
        tape: &ResTape<T>,
        dy: &Tensor<T>,
        g: &mut [T],
        dtemb: &mut [T],
    ) -> Tensor<T> {
        let da2 = self.conv2.backward(p, &tape.a2, dy, g, true).expect("dx requested");
        let dn2 = silu_backward(&tape.n2, &da2);
        let dh = self.norm2.backward(p, &tape.h, &dn2, g);
        let dbias: Vec<T> = (0..self.cout).map(|c| dh.channel(c).iter().copied().sum()).collect();
        for (acc, d) in dtemb.iter_mut().zip(self.time.backward(p, temb, &dbias, g)) {
            *acc += d;
        }
        let da1 = self.conv1.backward(p, &tape.a1, &dh, g, true).expect("dx requested");
        let dn1 = silu_backward(&tape.n1, &da1);
        let mut dx = self.norm1.backward(p, x, &dn1, g);
        match &self.shortcut {
            Some(sc) => dx.add_assign(&sc.backward(p, x, dy, g, true).expect("dx requested")),
            None => dx.add_assign(dy),
        }
        dx
    }
}
