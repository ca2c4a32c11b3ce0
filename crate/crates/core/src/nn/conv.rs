//! 3D convolutions.
//!
//! `3×3×3` stride-1 convolutions (the bulk of the network's work) use a
//! register-blocked direct kernel: a block of output channels times a run of
//! consecutive output voxels is accumulated in registers while walking
//! input channels and taps. For `f32` on x86-64 with AVX2+FMA an intrinsics
//! version of the same kernels is picked at runtime. Strided and pointwise
//! convolutions go through GEMM.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(all(feature = "std", target_arch = "x86_64"))]
use super::conv_x86;
use super::{matmul, scoped, Init, ParamLayout, ParamRange};
use crate::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d {
    pub weight: ParamRange,
    pub bias: ParamRange,
    pub cin: usize,
    pub cout: usize,
    /// 1 or 3.
    pub kernel: usize,
    /// 1 or 2 (stride 2 only with kernel 3).
    pub stride: usize,
}

impl Conv3d {
    pub(crate) fn new(
        layout: &mut ParamLayout,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        zero_init: bool,
    ) -> Self {
        assert!(kernel == 1 || kernel == 3);
        assert!(stride == 1 || (stride == 2 && kernel == 3));
        let taps = kernel * kernel * kernel;
        let init = if zero_init { Init::ZeroFan(cin * taps) } else { Init::Fan(cin * taps) };
        let weight = layout.add(scoped(name, "weight"), &[cout, cin, kernel, kernel, kernel], init);
        let bias = layout.add(scoped(name, "bias"), &[cout], Init::Zeros);
        Self {
            weight,
            bias,
            cin,
            cout,
            kernel,
            stride,
        }
    }

    pub fn out_dims(&self, dims: [usize; 3]) -> [usize; 3] {
        if self.stride == 2 {
            dims.map(|d| d.div_ceil(2))
        } else {
            dims
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.channels(), self.cin, "conv input channels");
        let dims = x.dims();
        let odims = self.out_dims(dims);
        let w = self.weight.of(p);
        let mut y = Tensor::zeros(self.cout, odims);
        match (self.kernel, self.stride) {
            (3, 1) => {
                let xpad = pad1(x.data(), self.cin, dims);
                let wblk = block_weights(w, self.cout, self.cin, false);
                conv3_same(&xpad, self.cin, dims, &wblk, self.cout, y.data_mut());
            }
            (3, 2) => {
                let col = im2col_s2(x.data(), self.cin, dims, odims);
                let n = odims.iter().product();
                matmul(self.cout, n, self.cin * 27, w, false, &col, false, y.data_mut(), T::zero());
            }
            _ => {
                let n = x.spatial_len();
                matmul(self.cout, n, self.cin, w, false, x.data(), false, y.data_mut(), T::zero());
            }
        }
        let b = self.bias.of(p);
        for (c, &bc) in b.iter().enumerate() {
            if bc != T::zero() {
                for v in y.channel_mut(c) {
                    *v += bc;
                }
            }
        }
        y
    }

    /// Accumulates weight and bias gradients into `g`; returns the input
    /// gradient when `need_dx` is set.
    pub fn backward<T: Real>(
        &self,
        p: &[T],
        x: &Tensor<T>,
        dy: &Tensor<T>,
        g: &mut [T],
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let dims = x.dims();
        let odims = self.out_dims(dims);
        debug_assert_eq!(dy.dims(), odims);
        {
            let db = self.bias.of_mut(g);
            for (c, acc) in db.iter_mut().enumerate() {
                *acc += dy.channel(c).iter().copied().sum::<T>();
            }
        }
        let w = self.weight.of(p);
        match (self.kernel, self.stride) {
            (3, 1) => {
                let xpad = pad1(x.data(), self.cin, dims);
                conv3_weight_grad(&xpad, self.cin, dims, dy.data(), self.cout, self.weight.of_mut(g));
                if !need_dx {
                    return None;
                }
                let dypad = pad1(dy.data(), self.cout, dims);
                let wblk = block_weights(w, self.cin, self.cout, true);
                let mut dx = Tensor::zeros(self.cin, dims);
                conv3_same(&dypad, self.cout, dims, &wblk, self.cin, dx.data_mut());
                Some(dx)
            }
            (3, 2) => {
                let col = im2col_s2(x.data(), self.cin, dims, odims);
                let n: usize = odims.iter().product();
                let k = self.cin * 27;
                matmul(self.cout, k, n, dy.data(), false, &col, true, self.weight.of_mut(g), T::one());
                if !need_dx {
                    return None;
                }
                let mut dcol = col;
                matmul(k, n, self.cout, w, true, dy.data(), false, &mut dcol, T::zero());
                let mut dx = Tensor::zeros(self.cin, dims);
                col2im_s2(&dcol, self.cin, dims, odims, dx.data_mut());
                Some(dx)
            }
            _ => {
                let n = x.spatial_len();
                matmul(self.cout, self.cin, n, dy.data(), false, x.data(), true, self.weight.of_mut(g), T::one());
                if !need_dx {
                    return None;
                }
                let mut dx = Tensor::zeros(self.cin, dims);
                matmul(self.cin, n, self.cout, w, true, dy.data(), false, dx.data_mut(), T::zero());
                Some(dx)
            }
        }
    }
}

#[cfg(all(feature = "std", target_arch = "x86_64"))]
fn as_f32<T: Real>(s: &[T]) -> Option<&[f32]> {
    use core::any::TypeId;
    // SAFETY: T is f32, checked through its TypeId.
    (TypeId::of::<T>() == TypeId::of::<f32>()).then(|| unsafe { core::slice::from_raw_parts(s.as_ptr().cast(), s.len()) })
}

#[cfg(all(feature = "std", target_arch = "x86_64"))]
fn as_f32_mut<T: Real>(s: &mut [T]) -> Option<&mut [f32]> {
    use core::any::TypeId;
    // SAFETY: T is f32, checked through its TypeId.
    (TypeId::of::<T>() == TypeId::of::<f32>())
        .then(|| unsafe { core::slice::from_raw_parts_mut(s.as_mut_ptr().cast(), s.len()) })
}

/// Zero padding of one voxel on every face.
fn pad1<T: Real>(x: &[T], c: usize, [d, h, w]: [usize; 3]) -> Vec<T> {
    let (pd, ph, pw) = (d + 2, h + 2, w + 2);
    let mut out = vec![T::zero(); c * pd * ph * pw];
    for ch in 0..c {
        for z in 0..d {
            for y in 0..h {
                let src = ((ch * d + z) * h + y) * w;
                let dst = ((ch * pd + z + 1) * ph + y + 1) * pw + 1;
                out[dst..dst + w].copy_from_slice(&x[src..src + w]);
            }
        }
    }
    out
}

/// Output-channel blocking used by the direct kernels.
pub(super) fn channel_blocks(cout: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut co = 0;
    core::iter::from_fn(move || {
        let rem = cout - co;
        let cb = if rem >= 8 {
            8
        } else if rem >= 4 {
            4
        } else if rem >= 1 {
            1
        } else {
            return None;
        };
        let out = (co, cb);
        co += cb;
        Some(out)
    })
}

/// Rearranges `[cout][cin][27]` weights into per-block `[cin][27][cb]`
/// panels. With `transpose_flip` the result convolves the output gradient
/// into the input gradient (`cin` and `cout` swap roles, taps reversed).
fn block_weights<T: Real>(w: &[T], blk_out: usize, blk_in: usize, transpose_flip: bool) -> Vec<T> {
    let mut out = Vec::with_capacity(w.len());
    for (o0, cb) in channel_blocks(blk_out) {
        for i in 0..blk_in {
            for k in 0..27 {
                for o in o0..o0 + cb {
                    let v = if transpose_flip {
                        // original layout [cout = i][cin = o][26 - k]
                        w[(i * blk_out + o) * 27 + (26 - k)]
                    } else {
                        w[(o * blk_in + i) * 27 + k]
                    };
                    out.push(v);
                }
            }
        }
    }
    out
}

fn conv3_same<T: Real>(xpad: &[T], cin: usize, dims: [usize; 3], wblk: &[T], cout: usize, out: &mut [T]) {
    assert_eq!(xpad.len(), cin * (dims[0] + 2) * (dims[1] + 2) * (dims[2] + 2));
    assert_eq!(wblk.len(), cin * cout * 27);
    assert_eq!(out.len(), cout * dims[0] * dims[1] * dims[2]);
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    {
        if let (Some(xpad), Some(wblk)) = (as_f32(xpad), as_f32(wblk)) {
            if conv_x86::available() {
                let out = as_f32_mut(out).expect("same element type");
                // SAFETY: features checked; buffer sizes asserted above.
                unsafe { conv_x86::conv3_same(xpad, cin, dims, wblk, cout, out) };
                return;
            }
        }
    }
    // SAFETY: buffer sizes asserted above.
    unsafe { conv3_same_impl(xpad, cin, dims, wblk, cout, out) }
}

#[inline(always)]
unsafe fn conv3_same_impl<T: Real>(
    xpad: &[T],
    cin: usize,
    dims: [usize; 3],
    wblk: &[T],
    cout: usize,
    out: &mut [T],
) {
    let mut wp = wblk.as_ptr();
    for (co0, cb) in channel_blocks(cout) {
        match cb {
            8 => conv3_block::<T, 8>(xpad.as_ptr(), cin, dims, wp, out.as_mut_ptr(), co0),
            4 => conv3_block::<T, 4>(xpad.as_ptr(), cin, dims, wp, out.as_mut_ptr(), co0),
            _ => conv3_block::<T, 1>(xpad.as_ptr(), cin, dims, wp, out.as_mut_ptr(), co0),
        }
        wp = wp.add(cin * 27 * cb);
    }
}

#[inline(always)]
unsafe fn conv3_block<T: Real, const CB: usize>(
    xpad: *const T,
    cin: usize,
    [d, h, w]: [usize; 3],
    wblk: *const T,
    out: *mut T,
    co0: usize,
) {
    let pw = w + 2;
    let plane = (h + 2) * pw;
    let geo = Geometry {
        cin,
        plane,
        pw,
        vol: (d + 2) * plane,
        ovol: d * h * w,
    };
    for z in 0..d {
        for y in 0..h {
            let in_row = z * plane + y * pw;
            let out_row = (z * h + y) * w;
            let mut x0 = 0;
            while x0 + 16 <= w {
                conv3_run::<T, CB, 16>(xpad, &geo, wblk, out, co0, in_row + x0, out_row + x0);
                x0 += 16;
            }
            while x0 + 8 <= w {
                conv3_run::<T, CB, 8>(xpad, &geo, wblk, out, co0, in_row + x0, out_row + x0);
                x0 += 8;
            }
            while x0 < w {
                conv3_run::<T, CB, 1>(xpad, &geo, wblk, out, co0, in_row + x0, out_row + x0);
                x0 += 1;
            }
        }
    }
}

struct Geometry {
    cin: usize,
    plane: usize,
    pw: usize,
    vol: usize,
    ovol: usize,
}

#[inline(always)]
unsafe fn conv3_run<T: Real, const CB: usize, const L: usize>(
    xpad: *const T,
    g: &Geometry,
    wblk: *const T,
    out: *mut T,
    co0: usize,
    in_off: usize,
    out_off: usize,
) {
    let mut acc = [[T::zero(); L]; CB];
    let mut wp = wblk;
    for c in 0..g.cin {
        let cbase = xpad.add(c * g.vol + in_off);
        for kd in 0..3 {
            for kh in 0..3 {
                let row = cbase.add(kd * g.plane + kh * g.pw);
                for kw in 0..3 {
                    let v = &*(row.add(kw) as *const [T; L]);
                    let ws = &*(wp as *const [T; CB]);
                    wp = wp.add(CB);
                    for o in 0..CB {
                        let wv = ws[o];
                        for j in 0..L {
                            acc[o][j] += wv * v[j];
                        }
                    }
                }
            }
        }
    }
    for (o, a) in acc.iter().enumerate() {
        let dst = out.add((co0 + o) * g.ovol + out_off);
        for (j, v) in a.iter().enumerate() {
            *dst.add(j) = *v;
        }
    }
}

/// `dw[co][ci][k] += Σ_p dy[co][p] · xpad[ci][p + k]`.
fn conv3_weight_grad<T: Real>(xpad: &[T], cin: usize, dims: [usize; 3], dy: &[T], cout: usize, dw: &mut [T]) {
    assert_eq!(xpad.len(), cin * (dims[0] + 2) * (dims[1] + 2) * (dims[2] + 2));
    assert_eq!(dy.len(), cout * dims[0] * dims[1] * dims[2]);
    assert_eq!(dw.len(), cout * cin * 27);
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    {
        if let (Some(xpad), Some(dy)) = (as_f32(xpad), as_f32(dy)) {
            if conv_x86::available() {
                let dw = as_f32_mut(dw).expect("same element type");
                // SAFETY: features checked; buffer sizes asserted above.
                unsafe { conv_x86::conv3_weight_grad(xpad, cin, dims, dy, cout, dw) };
                return;
            }
        }
    }
    // SAFETY: buffer sizes asserted above.
    unsafe { conv3_wgrad_impl(xpad, cin, dims, dy, cout, dw) }
}

#[inline(always)]
unsafe fn conv3_wgrad_impl<T: Real>(
    xpad: &[T],
    cin: usize,
    dims: [usize; 3],
    dy: &[T],
    cout: usize,
    dw: &mut [T],
) {
    for c in 0..cin {
        for kd in 0..3 {
            for kh in 0..3 {
                let mut co0 = 0;
                while co0 + 4 <= cout {
                    wgrad_block::<T, 4>(xpad.as_ptr(), c, cin, dims, kd, kh, dy.as_ptr(), co0, dw.as_mut_ptr());
                    co0 += 4;
                }
                while co0 < cout {
                    wgrad_block::<T, 1>(xpad.as_ptr(), c, cin, dims, kd, kh, dy.as_ptr(), co0, dw.as_mut_ptr());
                    co0 += 1;
                }
            }
        }
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
unsafe fn wgrad_block<T: Real, const CB: usize>(
    xpad: *const T,
    c: usize,
    cin: usize,
    [d, h, w]: [usize; 3],
    kd: usize,
    kh: usize,
    dy: *const T,
    co0: usize,
    dw: *mut T,
) {
    const L: usize = 8;
    let pw = w + 2;
    let plane = (h + 2) * pw;
    let vol = (d + 2) * plane;
    let ovol = d * h * w;
    let mut acc = [[[T::zero(); L]; 3]; CB];
    let mut tail = [[T::zero(); 3]; CB];
    for z in 0..d {
        for y in 0..h {
            let xrow = xpad.add(c * vol + (z + kd) * plane + (y + kh) * pw);
            let orow = (z * h + y) * w;
            let mut x0 = 0;
            while x0 + L <= w {
                let xv: [&[T; L]; 3] = core::array::from_fn(|kw| &*(xrow.add(x0 + kw) as *const [T; L]));
                for o in 0..CB {
                    let dv = &*(dy.add((co0 + o) * ovol + orow + x0) as *const [T; L]);
                    for kw in 0..3 {
                        for j in 0..L {
                            acc[o][kw][j] += dv[j] * xv[kw][j];
                        }
                    }
                }
                x0 += L;
            }
            while x0 < w {
                for o in 0..CB {
                    let dv = *dy.add((co0 + o) * ovol + orow + x0);
                    for kw in 0..3 {
                        tail[o][kw] += dv * *xrow.add(x0 + kw);
                    }
                }
                x0 += 1;
            }
        }
    }
    for o in 0..CB {
        for kw in 0..3 {
            let s: T = acc[o][kw].iter().copied().sum::<T>() + tail[o][kw];
            *dw.add(((co0 + o) * cin + c) * 27 + kd * 9 + kh * 3 + kw) += s;
        }
    }
}

/// Columns for a `3×3×3`, stride-2, padding-1 convolution:
/// `col[(ci * 27 + tap)][output voxel]`.
fn im2col_s2<T: Real>(x: &[T], cin: usize, [d, h, w]: [usize; 3], [od, oh, ow]: [usize; 3]) -> Vec<T> {
    let n = od * oh * ow;
    let mut col = vec![T::zero(); cin * 27 * n];
    for c in 0..cin {
        for kd in 0..3 {
            for kh in 0..3 {
                for kw in 0..3 {
                    let row = (c * 27 + kd * 9 + kh * 3 + kw) * n;
                    for oz in 0..od {
                        let iz = (2 * oz + kd) as isize - 1;
                        if iz < 0 || iz >= d as isize {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (2 * oy + kh) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src = (c * d + iz as usize) * h + iy as usize;
                            let dst = row + (oz * oh + oy) * ow;
                            for ox in 0..ow {
                                let ix = (2 * ox + kw) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    col[dst + ox] = x[src * w + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im_s2<T: Real>(col: &[T], cin: usize, [d, h, w]: [usize; 3], [od, oh, ow]: [usize; 3], dx: &mut [T]) {
    let n = od * oh * ow;
    for c in 0..cin {
        for kd in 0..3 {
            for kh in 0..3 {
                for kw in 0..3 {
                    let row = (c * 27 + kd * 9 + kh * 3 + kw) * n;
                    for oz in 0..od {
                        let iz = (2 * oz + kd) as isize - 1;
                        if iz < 0 || iz >= d as isize {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (2 * oy + kh) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let dst = (c * d + iz as usize) * h + iy as usize;
                            let src = row + (oz * oh + oy) * ow;
                            for ox in 0..ow {
                                let ix = (2 * ox + kw) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    dx[dst * w + ix as usize] += col[src + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Nearest-neighbor ×2 upsampling along every axis.
pub fn upsample_nearest<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [d, h, w] = x.dims();
    let mut y = Tensor::zeros(x.channels(), [2 * d, 2 * h, 2 * w]);
    for c in 0..x.channels() {
        let src = x.channel(c);
        let dst = y.channel_mut(c);
        for z in 0..2 * d {
            for yy in 0..2 * h {
                let srow = ((z / 2) * h + yy / 2) * w;
                let drow = (z * 2 * h + yy) * 2 * w;
                for xx in 0..2 * w {
                    dst[drow + xx] = src[srow + xx / 2];
                }
            }
        }
    }
    y
}

/// Adjoint of [`upsample_nearest`]: sums each `2×2×2` block.
pub fn upsample_nearest_backward<T: Real>(dy: &Tensor<T>) -> Tensor<T> {
    let [d2, h2, w2] = dy.dims();
    let (d, h, w) = (d2 / 2, h2 / 2, w2 / 2);
    let mut dx = Tensor::zeros(dy.channels(), [d, h, w]);
    for c in 0..dy.channels() {
        let src = dy.channel(c);
        let dst = dx.channel_mut(c);
        for z in 0..d2 {
            for yy in 0..h2 {
                let drow = ((z / 2) * h + yy / 2) * w;
                let srow = (z * h2 + yy) * w2;
                for xx in 0..w2 {
                    dst[drow + xx / 2] += src[srow + xx];
                }
            }
        }
    }
    dx
}
