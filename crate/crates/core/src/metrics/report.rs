use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::features::FeatureExtractor;
use super::image::{fid, masked_mse, mmd, RbfKernel};
use crate::data::{Mask, Volume};
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Normal-approximation 95% interval: `mean ± 1.96·sd/√n`, sample `sd`.
pub fn aggregate_folds(per_fold: &[f64]) -> Result<(f64, f64)> {
    let n = per_fold.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            what: "fold aggregation",
            needed: 2,
            got: n,
        });
    }
    let mean = per_fold.iter().sum::<f64>() / n as f64;
    let var = per_fold.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, 1.96 * var.sqrt() / (n as f64).sqrt()))
}

/// A real volume, its synthetic counterpart and the lung mask the squared
/// error is restricted to.
#[derive(Clone, Copy, Debug)]
pub struct PairedSample<'a> {
    pub real: &'a Volume,
    pub synthetic: &'a Volume,
    pub lung: &'a Mask,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldMetrics {
    pub fid: f64,
    pub mmd: f64,
    pub mmd_bandwidth: f64,
    /// Mean over pairs of the lung-masked squared error.
    pub mse: f64,
    pub real_count: usize,
    pub synthetic_count: usize,
    pub pair_count: usize,
}

/// FID and MMD between the two sets, masked MSE over the pairs.
pub fn evaluate_fold(
    real: &[&Volume],
    synthetic: &[&Volume],
    pairs: &[PairedSample<'_>],
    extractor: &dyn FeatureExtractor,
    kernel: RbfKernel,
) -> Result<FoldMetrics> {
    let features = |set: &[&Volume]| -> Result<Vec<Vec<f64>>> { set.iter().map(|v| extractor.extract(v).map(|f| f.values)).collect() };
    fold_metrics(&features(real)?, &features(synthetic)?, pairs, kernel)
}

/// [`evaluate_fold`] with the feature vectors already extracted.
pub fn fold_metrics(real: &[Vec<f64>], synthetic: &[Vec<f64>], pairs: &[PairedSample<'_>], kernel: RbfKernel) -> Result<FoldMetrics> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData {
            what: "masked MSE pairs",
            needed: 1,
            got: 0,
        });
    }
    let m = mmd(real, synthetic, kernel)?;
    let mut mse = 0.0;
    for p in pairs {
        mse += masked_mse(p.real, p.synthetic, p.lung)?;
    }
    Ok(FoldMetrics {
        fid: fid(real, synthetic)?,
        mmd: m.value,
        mmd_bandwidth: m.bandwidth,
        mse: mse / pairs.len() as f64,
        real_count: real.len(),
        synthetic_count: synthetic.len(),
        pair_count: pairs.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldStat {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    /// Half-width of the 95% interval; absent with a single fold.
    pub ci95: Option<f64>,
}

impl FoldStat {
    pub fn new(per_fold: Vec<f64>) -> Self {
        match aggregate_folds(&per_fold) {
            Ok((mean, ci)) => Self {
                per_fold,
                mean,
                ci95: Some(ci),
            },
            Err(_) => Self {
                mean: per_fold.first().copied().unwrap_or(f64::NAN),
                per_fold,
                ci95: None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub fid: FoldStat,
    pub mmd: FoldStat,
    pub mse: FoldStat,
    pub folds: Vec<FoldMetrics>,
    pub extractor_id: String,
    pub kernel: String,
    pub mmd_estimator: String,
    pub ci_method: String,
}

impl MetricReport {
    pub fn from_folds(folds: Vec<FoldMetrics>, extractor_id: &str, kernel: RbfKernel) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::InsufficientData {
                what: "metric report",
                needed: 1,
                got: 0,
            });
        }
        let column = |f: fn(&FoldMetrics) -> f64| FoldStat::new(folds.iter().map(f).collect());
        let kernel = match kernel.bandwidth {
            Some(s) => alloc::format!("rbf(bandwidth={s})"),
            None => "rbf(bandwidth=median pairwise distance)".to_string(),
        };
        Ok(Self {
            fid: column(|f| f.fid),
            mmd: column(|f| f.mmd),
            mse: column(|f| f.mse),
            folds,
            extractor_id: extractor_id.to_string(),
            kernel,
            mmd_estimator: "unbiased".to_string(),
            ci_method: "normal approximation, mean ± 1.96·sd/√n".to_string(),
        })
    }
}
