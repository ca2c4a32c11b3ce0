//! Floating-point abstraction shared by the network code.
//!
//! Training and sampling run in `f32`; gradient checks instantiate the same
//! code in `f64`.

use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

pub trait Real:
    Float
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Whether this is `f32`; used to pick the vectorized convolution path.
    const IS_F32: bool;

    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Fused multiply-add `self * a + b` when a hardware instruction is
    /// available to the caller, plain multiply-add otherwise.
    fn fma(self, a: Self, b: Self) -> Self;

    /// Logistic function `1 / (1 + e^-x)`.
    fn sigmoid(self) -> Self;

    /// `C = alpha * A * B + beta * C` with arbitrary element strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-aliasing (for `c`)
    /// `m x k`, `k x n` and `m x n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const IS_F32: bool = true;

    /// Branch-free so that loops over slices vectorize. Within a few ulp of
    /// the libm version; NaN inputs give a finite value, which callers
    /// multiply back into `x`.
    #[inline(always)]
    fn sigmoid(self) -> Self {
        1.0 / (1.0 + exp_f32(-self))
    }

    #[inline(always)]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn fma(self, a: Self, b: Self) -> Self {
        #[cfg(feature = "std")]
        {
            self.mul_add(a, b)
        }
        #[cfg(not(feature = "std"))]
        {
            self * a + b
        }
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    const IS_F32: bool = false;

    #[inline(always)]
    fn sigmoid(self) -> Self {
        1.0 / (1.0 + Float::exp(-self))
    }

    #[inline(always)]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline(always)]
    fn fma(self, a: Self, b: Self) -> Self {
        #[cfg(feature = "std")]
        {
            self.mul_add(a, b)
        }
        #[cfg(not(feature = "std"))]
        {
            self * a + b
        }
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// `e^x` for `x` clamped to `[-87, 88]`: Cody-Waite reduction by `ln 2` and a
/// degree-6 polynomial, with `2^n` assembled from exponent bits.
#[inline(always)]
fn exp_f32(x: f32) -> f32 {
    const SHIFTER: f32 = 12_582_912.0; // 1.5 * 2^23
    let x = x.clamp(-87.0, 88.0);
    let t = x * core::f32::consts::LOG2_E + SHIFTER;
    let n = t - SHIFTER;
    let r = x - n * 0.693_359_4 + n * 2.121_944_4e-4;
    let mut p = 1.987_569_1e-4_f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 0.5;
    let e = p * r * r + r + 1.0;
    let k = t.to_bits() as i32 - 0x4B40_0000;
    e * f32::from_bits(((k + 127) << 23) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_sigmoid_tracks_double_precision() {
        let mut worst = 0.0f64;
        let mut x = -100.0f32;
        while x <= 100.0 {
            let exact = 1.0 / (1.0 + (-(x as f64)).exp());
            let got = Real::sigmoid(x) as f64;
            if exact > 1e-30 {
                worst = worst.max((got - exact).abs() / exact);
            }
            x += 0.0137;
        }
        assert!(worst < 1e-6, "{worst}");
        assert_eq!(Real::sigmoid(0.0f32), 0.5);
        assert_eq!(Real::sigmoid(f32::INFINITY), 1.0);
        assert_eq!(Real::sigmoid(f32::NEG_INFINITY) * 0.0, 0.0);
    }
}
