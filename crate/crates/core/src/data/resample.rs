//! Resampling onto a cubic grid. Voxel centers are aligned: output voxel `i`
//! maps to source coordinate `(i + 0.5) * n_src / n_dst - 0.5`.

use alloc::vec::Vec;

use super::{SemanticLayout, Volume};
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float;

fn check(dims: [usize; 3], target: usize) -> Result<()> {
    if target < 2 {
        return Err(Error::config("target_side", "must be at least 2"));
    }
    if dims.contains(&0) {
        return Err(Error::shape("resample source", &[1, 1, 1], &dims));
    }
    Ok(())
}

fn rescaled_spacing(spacing: [f64; 3], dims: [usize; 3], target: usize) -> [f64; 3] {
    core::array::from_fn(|a| spacing[a] * dims[a] as f64 / target as f64)
}

/// Per-axis linear interpolation taps: `(i0, i1, weight of i1)`.
fn linear_taps(n_src: usize, n_dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_src as f64 / n_dst as f64;
    (0..n_dst)
        .map(|i| {
            let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_src - 1) as f64);
            let i0 = x.floor() as usize;
            let i1 = (i0 + 1).min(n_src - 1);
            (i0, i1, x - i0 as f64)
        })
        .collect()
}

/// Nearest source voxel: the one containing the output voxel center.
fn nearest_taps(n_src: usize, n_dst: usize) -> Vec<usize> {
    (0..n_dst)
        .map(|i| (((2 * i + 1) * n_src) / (2 * n_dst)).min(n_src - 1))
        .collect()
}

/// Trilinear resampling to `target³`; spacing is rescaled so the physical
/// extent is preserved.
pub fn resample_volume(vol: &Volume, target: usize) -> Result<Volume> {
    let dims = vol.dims();
    check(dims, target)?;
    let tz = linear_taps(dims[0], target);
    let ty = linear_taps(dims[1], target);
    let tx = linear_taps(dims[2], target);
    let src = vol.values();
    let at = |z: usize, y: usize, x: usize| src[(z * dims[1] + y) * dims[2] + x] as f64;
    let mut out = Vec::with_capacity(target * target * target);
    for &(z0, z1, wz) in &tz {
        for &(y0, y1, wy) in &ty {
            for &(x0, x1, wx) in &tx {
                let lerp = |a: f64, b: f64, w: f64| if w == 0.0 { a } else { a + (b - a) * w };
                let c00 = lerp(at(z0, y0, x0), at(z0, y0, x1), wx);
                let c01 = lerp(at(z0, y1, x0), at(z0, y1, x1), wx);
                let c10 = lerp(at(z1, y0, x0), at(z1, y0, x1), wx);
                let c11 = lerp(at(z1, y1, x0), at(z1, y1, x1), wx);
                let c0 = lerp(c00, c01, wy);
                let c1 = lerp(c10, c11, wy);
                out.push(lerp(c0, c1, wz).clamp(-1.0, 1.0) as f32);
            }
        }
    }
    Volume::new(
        [target; 3],
        rescaled_spacing(vol.spacing_mm(), dims, target),
        out,
    )
}

/// Nearest-neighbor resampling to `target³`; never introduces new labels.
pub fn resample_layout(layout: &SemanticLayout, target: usize) -> Result<SemanticLayout> {
    let dims = layout.dims();
    check(dims, target)?;
    let tz = nearest_taps(dims[0], target);
    let ty = nearest_taps(dims[1], target);
    let tx = nearest_taps(dims[2], target);
    let src = layout.labels();
    let mut out = Vec::with_capacity(target * target * target);
    for &z in &tz {
        for &y in &ty {
            for &x in &tx {
                out.push(src[(z * dims[1] + y) * dims[2] + x]);
            }
        }
    }
    SemanticLayout::new(
        [target; 3],
        rescaled_spacing(layout.spacing_mm(), dims, target),
        out,
    )
}
