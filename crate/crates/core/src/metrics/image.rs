use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::{Mask, Volume};
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// `(1/Σm)·Σ m·(real − syn)²` over the voxels of `lung`.
pub fn masked_mse(real: &Volume, syn: &Volume, lung: &Mask) -> Result<f64> {
    if syn.dims() != real.dims() {
        return Err(Error::shape("masked_mse synthetic volume", &real.dims(), &syn.dims()));
    }
    if lung.dims() != real.dims() {
        return Err(Error::shape("masked_mse lung mask", &real.dims(), &lung.dims()));
    }
    masked_mse_values(real.values(), syn.values(), lung.values())
}

/// [`masked_mse`] on raw voxel slices; mask entries are 0 or 1.
pub fn masked_mse_values(real: &[f32], syn: &[f32], mask: &[u8]) -> Result<f64> {
    if syn.len() != real.len() || mask.len() != real.len() {
        return Err(Error::shape("masked_mse inputs", &[real.len(), real.len()], &[syn.len(), mask.len()]));
    }
    let mut sum = 0.0;
    let mut n = 0.0;
    for ((&a, &b), &m) in real.iter().zip(syn).zip(mask) {
        let d = a as f64 - b as f64;
        sum += m as f64 * d * d;
        n += m as f64;
    }
    if n == 0.0 {
        return Err(Error::DegenerateMask("lung mask is empty"));
    }
    Ok(sum / n)
}

fn check_set(what: &'static str, set: &[Vec<f64>], dim: usize) -> Result<()> {
    if set.len() < 2 {
        return Err(Error::InsufficientData {
            what,
            needed: 2,
            got: set.len(),
        });
    }
    for v in set {
        if v.len() != dim {
            return Err(Error::shape(what, &[dim], &[v.len()]));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericHealth { context: what, step: None });
        }
    }
    Ok(())
}

pub fn mean_vector(set: &[Vec<f64>]) -> DVector<f64> {
    let d = set.first().map_or(0, Vec::len);
    let mut mu = DVector::zeros(d);
    for v in set {
        mu += DVector::from_column_slice(v);
    }
    mu / set.len().max(1) as f64
}

/// Sample covariance with the `n − 1` denominator.
pub fn covariance(set: &[Vec<f64>]) -> DMatrix<f64> {
    let mu = mean_vector(set);
    let d = mu.len();
    let mut x = DMatrix::zeros(d, set.len());
    for (j, v) in set.iter().enumerate() {
        for i in 0..d {
            x[(i, j)] = v[i] - mu[i];
        }
    }
    (&x * x.transpose()) / (set.len().saturating_sub(1).max(1)) as f64
}

/// Principal square root of the symmetric part of `m`, with negative
/// eigenvalues clamped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between two Gaussians. The cross term
/// `Tr((Σa Σb)^½)` is evaluated as `Tr((Σa^½ Σb Σa^½)^½)`, whose argument is
/// symmetric positive semidefinite, averaged with the same expression in the
/// other order. With rank-deficient covariances the two orders differ by the
/// square roots of rounding noise; averaging makes the result symmetric.
pub fn fid_from_stats(mu_a: &DVector<f64>, cov_a: &DMatrix<f64>, mu_b: &DVector<f64>, cov_b: &DMatrix<f64>) -> Result<f64> {
    let d = mu_a.len();
    if mu_b.len() != d || cov_a.shape() != (d, d) || cov_b.shape() != (d, d) {
        return Err(Error::shape("fid statistics", &[d, d], &[cov_b.nrows(), cov_b.ncols()]));
    }
    let diff = mu_a - mu_b;
    let cross = 0.5 * (trace_sqrt_product(cov_a, cov_b) + trace_sqrt_product(cov_b, cov_a));
    let value = diff.norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let root = sqrtm_psd(a);
    let inner = &root * b * &root;
    let inner = (&inner + inner.transpose()) * 0.5;
    SymmetricEigen::new(inner).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum()
}

pub fn fid(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let d = a.first().map_or(0, Vec::len);
    check_set("fid set A", a, d)?;
    check_set("fid set B", b, d)?;
    fid_from_stats(&mean_vector(a), &covariance(a), &mean_vector(b), &covariance(b))
}

/// Gaussian kernel `exp(−‖x − y‖² / 2σ²)`; `None` picks σ as the median
/// pairwise distance over both sets.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RbfKernel {
    pub bandwidth: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mmd {
    /// Unbiased estimate of the squared MMD; may be slightly negative.
    pub value: f64,
    pub bandwidth: f64,
    /// Every point coincides, so the median bandwidth is zero and the value
    /// is reported as 0.
    pub degenerate: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Unbiased squared MMD.
///
/// Equal-sized sets are treated as paired samples `(a_i, b_i)` and use the
/// U-statistic over `h(i, j) = k(a_i, a_j) + k(b_i, b_j) − k(a_i, b_j) − k(a_j, b_i)`,
/// `i ≠ j`, which is exactly zero when `a` and `b` are the same sequence.
/// Unequal sizes use the two-sample estimator with within-set diagonals
/// removed.
pub fn mmd(a: &[Vec<f64>], b: &[Vec<f64>], kernel: RbfKernel) -> Result<Mmd> {
    let d = a.first().map_or(0, Vec::len);
    check_set("mmd set A", a, d)?;
    check_set("mmd set B", b, d)?;
    let bandwidth = match kernel.bandwidth {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::config("bandwidth", alloc::format!("must be positive, got {s}"))),
        None => {
            let all: Vec<&Vec<f64>> = a.iter().chain(b).collect();
            let mut dists = Vec::with_capacity(all.len() * (all.len() - 1) / 2);
            for i in 0..all.len() {
                for j in i + 1..all.len() {
                    dists.push(sq_dist(all[i], all[j]).sqrt());
                }
            }
            median(dists)
        }
    };
    if bandwidth == 0.0 {
        return Ok(Mmd {
            value: 0.0,
            bandwidth,
            degenerate: true,
        });
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let k = |x: &[f64], y: &[f64]| (-gamma * sq_dist(x, y)).exp();
    let (m, n) = (a.len(), b.len());
    let value = if m == n {
        let mut sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    sum += k(&a[i], &a[j]) + k(&b[i], &b[j]) - k(&a[i], &b[j]) - k(&a[j], &b[i]);
                }
            }
        }
        sum / (m * (m - 1)) as f64
    } else {
        let within = |s: &[Vec<f64>]| {
            let mut sum = 0.0;
            for i in 0..s.len() {
                for j in 0..s.len() {
                    if i != j {
                        sum += k(&s[i], &s[j]);
                    }
                }
            }
            sum / (s.len() * (s.len() - 1)) as f64
        };
        let mut cross = 0.0;
        for x in a {
            for y in b {
                cross += k(x, y);
            }
        }
        within(a) + within(b) - 2.0 * cross / (m * n) as f64
    };
    Ok(Mmd {
        value,
        bandwidth,
        degenerate: false,
    })
}
