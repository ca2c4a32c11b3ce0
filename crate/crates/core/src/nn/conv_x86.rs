//! AVX2/FMA kernels for `f32` `3×3×3` stride-1 convolutions.
//!
//! Same data layout and blocking as the portable kernels in `conv.rs`;
//! written with intrinsics because the autovectorized generic code rebuilds
//! the overlapping tap loads with shuffles.

use core::arch::x86_64::*;

pub(super) fn available() -> bool {
    std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
}

struct Geo {
    cin: usize,
    vol: usize,
    plane: usize,
    pw: usize,
    ovol: usize,
}

/// # Safety
/// AVX2 and FMA must be available; `xpad` is `cin × (d+2) × (h+2) × (w+2)`,
/// `wblk` holds weights blocked by `channel_blocks(cout)`, `out` is
/// `cout × d × h × w`.
#[target_feature(enable = "avx2,fma")]
pub(super) unsafe fn conv3_same(xpad: &[f32], cin: usize, dims: [usize; 3], wblk: &[f32], cout: usize, out: &mut [f32]) {
    let [d, h, w] = dims;
    let pw = w + 2;
    let plane = (h + 2) * pw;
    let g = Geo {
        cin,
        vol: (d + 2) * plane,
        plane,
        pw,
        ovol: d * h * w,
    };
    let mut wp = wblk.as_ptr();
    for (co0, cb) in super::conv::channel_blocks(cout) {
        for z in 0..d {
            for y in 0..h {
                let inp = xpad.as_ptr().add(z * plane + y * pw);
                let outp = out.as_mut_ptr().add(co0 * g.ovol + (z * h + y) * w);
                let mut x0 = 0;
                while x0 + 16 <= w {
                    for half in 0..cb / 4 {
                        let o = 4 * half;
                        fwd_block::<4, 2>(&g, inp.add(x0), wp.add(o), cb, outp.add(o * g.ovol + x0));
                    }
                    if cb < 4 {
                        fwd_block::<1, 2>(&g, inp.add(x0), wp, cb, outp.add(x0));
                    }
                    x0 += 16;
                }
                while x0 + 8 <= w {
                    if cb == 8 {
                        // One vector per channel: eight accumulators keep
                        // both FMA pipes busy where four would not.
                        fwd_block::<8, 1>(&g, inp.add(x0), wp, cb, outp.add(x0));
                    } else {
                        for half in 0..cb / 4 {
                            let o = 4 * half;
                            fwd_block::<4, 1>(&g, inp.add(x0), wp.add(o), cb, outp.add(o * g.ovol + x0));
                        }
                    }
                    if cb < 4 {
                        fwd_block::<1, 1>(&g, inp.add(x0), wp, cb, outp.add(x0));
                    }
                    x0 += 8;
                }
                for x in x0..w {
                    fwd_scalar(&g, inp.add(x), wp, cb, outp.add(x));
                }
            }
        }
        wp = wp.add(cin * 27 * cb);
    }
}

/// `CB` output channels, read from a weight panel whose taps are `wstride`
/// apart, times `V` vectors of 8 consecutive voxels.
#[inline]
#[target_feature(enable = "avx2,fma")]
unsafe fn fwd_block<const CB: usize, const V: usize>(g: &Geo, inp: *const f32, wp: *const f32, wstride: usize, out: *mut f32) {
    let mut acc = [[_mm256_setzero_ps(); V]; CB];
    let mut wq = wp;
    for c in 0..g.cin {
        let base = inp.add(c * g.vol);
        for kd in 0..3 {
            for kh in 0..3 {
                let row = base.add(kd * g.plane + kh * g.pw);
                for kw in 0..3 {
                    let mut xv = [_mm256_setzero_ps(); V];
                    for (v, slot) in xv.iter_mut().enumerate() {
                        *slot = _mm256_loadu_ps(row.add(kw + 8 * v));
                    }
                    for (o, acc_o) in acc.iter_mut().enumerate() {
                        let wv = _mm256_broadcast_ss(&*wq.add(o));
                        for v in 0..V {
                            acc_o[v] = _mm256_fmadd_ps(wv, xv[v], acc_o[v]);
                        }
                    }
                    wq = wq.add(wstride);
                }
            }
        }
    }
    for (o, acc_o) in acc.iter().enumerate() {
        for (v, a) in acc_o.iter().enumerate() {
            _mm256_storeu_ps(out.add(o * g.ovol + 8 * v), *a);
        }
    }
}

#[inline]
#[target_feature(enable = "avx2,fma")]
unsafe fn fwd_scalar(g: &Geo, inp: *const f32, wp: *const f32, cb: usize, out: *mut f32) {
    for o in 0..cb {
        let mut acc = 0.0f32;
        let mut wq = wp.add(o);
        for c in 0..g.cin {
            let base = inp.add(c * g.vol);
            for kd in 0..3 {
                for kh in 0..3 {
                    let row = base.add(kd * g.plane + kh * g.pw);
                    for kw in 0..3 {
                        acc = (*wq).mul_add(*row.add(kw), acc);
                        wq = wq.add(cb);
                    }
                }
            }
        }
        *out.add(o * g.ovol) = acc;
    }
}

/// `dw[co][ci][k] += Σ_p dy[co][p] · xpad[ci][p + k]`.
///
/// # Safety
/// As for [`conv3_same`], with `dy` shaped `cout × d × h × w` and `dw`
/// shaped `cout × cin × 27`.
#[target_feature(enable = "avx2,fma")]
pub(super) unsafe fn conv3_weight_grad(xpad: &[f32], cin: usize, dims: [usize; 3], dy: &[f32], cout: usize, dw: &mut [f32]) {
    let [d, h, w] = dims;
    let pw = w + 2;
    let plane = (h + 2) * pw;
    let g = Geo {
        cin,
        vol: (d + 2) * plane,
        plane,
        pw,
        ovol: d * h * w,
    };
    for c in 0..cin {
        for kd in 0..3 {
            for kh in 0..3 {
                let xbase = xpad.as_ptr().add(c * g.vol + kd * plane + kh * pw);
                let mut co0 = 0;
                while co0 + 4 <= cout {
                    wgrad_block::<4>(&g, dims, xbase, dy.as_ptr().add(co0 * g.ovol), dw.as_mut_ptr().add((co0 * cin + c) * 27 + kd * 9 + kh * 3));
                    co0 += 4;
                }
                while co0 < cout {
                    wgrad_block::<1>(&g, dims, xbase, dy.as_ptr().add(co0 * g.ovol), dw.as_mut_ptr().add((co0 * cin + c) * 27 + kd * 9 + kh * 3));
                    co0 += 1;
                }
            }
        }
    }
}

/// Accumulates the three `kw` taps for `CB` consecutive output channels;
/// `dw` points at `[co0][c][kd][kh][0]`, channel stride `cin * 27`.
#[inline]
#[target_feature(enable = "avx2,fma")]
unsafe fn wgrad_block<const CB: usize>(g: &Geo, [d, h, w]: [usize; 3], xbase: *const f32, dy: *const f32, dw: *mut f32) {
    let mut acc = [[_mm256_setzero_ps(); 3]; CB];
    let mut tail = [[0.0f32; 3]; CB];
    for z in 0..d {
        for y in 0..h {
            let xrow = xbase.add(z * g.plane + y * g.pw);
            let orow = (z * h + y) * w;
            let mut x0 = 0;
            while x0 + 8 <= w {
                let x0v = _mm256_loadu_ps(xrow.add(x0));
                let x1v = _mm256_loadu_ps(xrow.add(x0 + 1));
                let x2v = _mm256_loadu_ps(xrow.add(x0 + 2));
                for (o, acc_o) in acc.iter_mut().enumerate() {
                    let dv = _mm256_loadu_ps(dy.add(o * g.ovol + orow + x0));
                    acc_o[0] = _mm256_fmadd_ps(dv, x0v, acc_o[0]);
                    acc_o[1] = _mm256_fmadd_ps(dv, x1v, acc_o[1]);
                    acc_o[2] = _mm256_fmadd_ps(dv, x2v, acc_o[2]);
                }
                x0 += 8;
            }
            for x in x0..w {
                for (o, tail_o) in tail.iter_mut().enumerate() {
                    let dv = *dy.add(o * g.ovol + orow + x);
                    for (kw, t) in tail_o.iter_mut().enumerate() {
                        *t += dv * *xrow.add(x + kw);
                    }
                }
            }
        }
    }
    for o in 0..CB {
        for kw in 0..3 {
            let mut lanes = [0.0f32; 8];
            _mm256_storeu_ps(lanes.as_mut_ptr(), acc[o][kw]);
            *dw.add(o * g.cin * 27 + kw) += lanes.iter().sum::<f32>() + tail[o][kw];
        }
    }
}
