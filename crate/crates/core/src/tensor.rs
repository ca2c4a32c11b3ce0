use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Dense channel-major 3D tensor `[C, D, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    channels: usize,
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Copy + Default> Tensor<T> {
    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        Self {
            channels,
            dims,
            data: vec![T::default(); channels * dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(channels: usize, dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        let expected = channels * dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::shape("tensor data", &[expected], &[data.len()]));
        }
        Ok(Self {
            channels,
            dims,
            data,
        })
    }

    /// Stacks single- or multi-channel tensors of equal spatial shape along
    /// the channel axis.
    pub fn concat(parts: &[&Tensor<T>]) -> Result<Self> {
        let dims = parts
            .first()
            .map(|p| p.dims)
            .ok_or_else(|| Error::config("concat", "no tensors to concatenate"))?;
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.dims != dims {
                return Err(Error::shape("concat", &dims, &p.dims));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            channels,
            dims,
            data,
        })
    }

    /// Splits off the first `c` channels.
    pub fn split_channels(&self, c: usize) -> (Self, Self) {
        let n = c * self.spatial_len();
        (
            Self {
                channels: c,
                dims: self.dims,
                data: self.data[..n].to_vec(),
            },
            Self {
                channels: self.channels - c,
                dims: self.dims,
                data: self.data[n..].to_vec(),
            },
        )
    }
}

impl<T> Tensor<T> {
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// `[C, D, H, W]`.
    pub fn shape(&self) -> [usize; 4] {
        [self.channels, self.dims[0], self.dims[1], self.dims[2]]
    }

    #[inline]
    pub fn spatial_len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.spatial_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.spatial_len();
        &mut self.data[c * n..(c + 1) * n]
    }
}

impl<T: crate::Real> Tensor<T> {
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn cast<U: crate::Real>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            dims: self.dims,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}
