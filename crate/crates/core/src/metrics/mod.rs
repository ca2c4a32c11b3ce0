//! Image-quality, segmentation and diversity metrics.

mod diversity;
mod features;
mod image;
mod report;
mod segmentation;

pub use diversity::{ellipse_overlap, fit_ellipse, mds_embed, pairwise_distances, Ellipse, Overlap, DEFAULT_OVERLAP_SAMPLES};
pub use features::{extract_features, FeatureExtractor, FeatureVector, HandcraftedExtractor, HANDCRAFTED_ID};
pub use image::{covariance, fid, fid_from_stats, masked_mse, masked_mse_values, mean_vector, mmd, sqrtm_psd, Mmd, RbfKernel};
pub use report::{aggregate_folds, evaluate_fold, fold_metrics, FoldMetrics, FoldStat, MetricReport, PairedSample};
pub use segmentation::{confusion, dice, sensitivity, specificity, Confusion};

#[cfg(test)]
mod tests;
