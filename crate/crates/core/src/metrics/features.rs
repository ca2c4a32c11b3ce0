use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Volume;
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float;

pub const HANDCRAFTED_ID: &str = "handcrafted-v1";

const HIST_BINS: usize = 16;
const PYRAMID: [usize; 3] = [4, 2, 1];

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub extractor_id: String,
}

/// Maps a volume to a fixed-length descriptor. FID and MMD are only
/// comparable between runs that used the same `id`.
pub trait FeatureExtractor {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, vol: &Volume) -> Result<FeatureVector>;
}

/// Deterministic intensity statistics:
///
/// * mean, std, min and max of each octant (32 values),
/// * a 16-bin histogram over [-1, 1] as voxel fractions, out-of-range values
///   falling in the end bins (16 values),
/// * block means on 4³, 2³ and 1³ grids (73 values).
///
/// The length, 121, does not depend on the volume resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HandcraftedExtractor;

impl HandcraftedExtractor {
    pub const DIM: usize = 8 * 4 + HIST_BINS + 64 + 8 + 1;
}

/// `i`'s cell when an axis of length `n` is cut into `g` near-equal parts.
#[inline]
fn cell(i: usize, n: usize, g: usize) -> usize {
    i * g / n
}

impl FeatureExtractor for HandcraftedExtractor {
    fn id(&self) -> &str {
        HANDCRAFTED_ID
    }

    fn dim(&self) -> usize {
        Self::DIM
    }

    fn extract(&self, vol: &Volume) -> Result<FeatureVector> {
        let [d, h, w] = vol.dims();
        if d < 4 || h < 4 || w < 4 {
            return Err(Error::InputDomain(format!("feature extraction needs at least 4 voxels per axis, got {:?}", vol.dims())));
        }
        if vol.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericHealth {
                context: "feature extraction input",
                step: None,
            });
        }
        let mut sum = [0.0f64; 8];
        let mut lo = [f64::INFINITY; 8];
        let mut hi = [f64::NEG_INFINITY; 8];
        let mut count = [0usize; 8];
        let mut hist = [0usize; HIST_BINS];
        let mut blocks: Vec<Vec<(f64, usize)>> = PYRAMID.iter().map(|g| vec![(0.0, 0); g * g * g]).collect();
        let values = vol.values();
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let v = values[(z * h + y) * w + x] as f64;
                    let o = (cell(z, d, 2) * 2 + cell(y, h, 2)) * 2 + cell(x, w, 2);
                    sum[o] += v;
                    lo[o] = lo[o].min(v);
                    hi[o] = hi[o].max(v);
                    count[o] += 1;
                    let bin = ((v + 1.0) * 0.5 * HIST_BINS as f64).floor().clamp(0.0, (HIST_BINS - 1) as f64) as usize;
                    hist[bin] += 1;
                    for (level, &g) in PYRAMID.iter().enumerate() {
                        let b = (cell(z, d, g) * g + cell(y, h, g)) * g + cell(x, w, g);
                        blocks[level][b].0 += v;
                        blocks[level][b].1 += 1;
                    }
                }
            }
        }
        let mean: Vec<f64> = (0..8).map(|o| sum[o] / count[o] as f64).collect();
        let mut dev = [0.0f64; 8];
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let o = (cell(z, d, 2) * 2 + cell(y, h, 2)) * 2 + cell(x, w, 2);
                    let e = values[(z * h + y) * w + x] as f64 - mean[o];
                    dev[o] += e * e;
                }
            }
        }
        let mut out = Vec::with_capacity(Self::DIM);
        for o in 0..8 {
            out.extend_from_slice(&[mean[o], (dev[o] / count[o] as f64).sqrt(), lo[o], hi[o]]);
        }
        let total = vol.len() as f64;
        out.extend(hist.iter().map(|&c| c as f64 / total));
        for level in &blocks {
            out.extend(level.iter().map(|&(s, c)| s / c as f64));
        }
        debug_assert_eq!(out.len(), Self::DIM);
        Ok(FeatureVector {
            values: out,
            extractor_id: HANDCRAFTED_ID.to_string(),
        })
    }
}

pub fn extract_features(vol: &Volume) -> Result<FeatureVector> {
    HandcraftedExtractor.extract(vol)
}
