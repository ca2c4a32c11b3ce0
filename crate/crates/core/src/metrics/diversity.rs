use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix3, SymmetricEigen, Vector3};

use crate::rng::{Purpose, SeedStream};
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float;

pub const DEFAULT_OVERLAP_SAMPLES: usize = 100_000;

/// Euclidean distance matrix of a set of feature vectors.
pub fn pairwise_distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i][j] = s.sqrt();
            d[j][i] = d[i][j];
        }
    }
    d
}

/// Classical multidimensional scaling to two dimensions.
///
/// Each axis is signed so that its largest-magnitude coordinate is positive,
/// which makes the embedding reproducible across eigen-solver sign choices.
pub fn mds_embed(d: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = d.len();
    let scale = d.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * (1.0 + scale);
    for (i, row) in d.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InputDomain(format!("distance matrix row {i} has {} entries, expected {n}", row.len())));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InputDomain(format!("distance ({i}, {j}) = {v} is not a non-negative number")));
            }
            if (v - d[j][i]).abs() > tol {
                return Err(Error::InputDomain(format!("distance matrix is not symmetric at ({i}, {j})")));
            }
        }
        if row[i].abs() > tol {
            return Err(Error::InputDomain(format!("distance matrix has non-zero diagonal at {i}")));
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let sq = DMatrix::from_fn(n, n, |i, j| d[i][j] * d[i][j]);
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let total = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + total));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut out = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let root = eig.eigenvalues[k].max(0.0).sqrt();
        let v = eig.eigenvectors.column(k);
        let pivot = (0..n).fold(0, |best, i| if v[i].abs() > v[best].abs() + 1e-12 { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[i][axis] = sign * v[i] * root;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Major then minor semi-axis.
    pub semi_axes: [f64; 2],
    /// Angle of the major axis from the x axis, radians in (−π/2, π/2].
    pub angle: f64,
}

impl Ellipse {
    pub fn new(center: [f64; 2], semi_axes: [f64; 2], angle: f64) -> Result<Self> {
        if !(semi_axes[0] > 0.0 && semi_axes[1] > 0.0 && semi_axes.iter().all(|a| a.is_finite())) {
            return Err(Error::InputDomain(format!("ellipse semi-axes must be positive, got {semi_axes:?}")));
        }
        Ok(Self { center, semi_axes, angle })
    }

    pub fn area(&self) -> f64 {
        PI * self.semi_axes[0] * self.semi_axes[1]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let u = (c * dx + s * dy) / self.semi_axes[0];
        let v = (-s * dx + c * dy) / self.semi_axes[1];
        u * u + v * v <= 1.0
    }

    /// Axis-aligned half extents.
    pub fn half_extents(&self) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let [a, b] = self.semi_axes;
        [(a * a * c * c + b * b * s * s).sqrt(), (a * a * s * s + b * b * c * c).sqrt()]
    }

    /// Point at parameter `theta` on the boundary.
    pub fn point_at(&self, theta: f64) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let (x, y) = (self.semi_axes[0] * theta.cos(), self.semi_axes[1] * theta.sin());
        [self.center[0] + c * x - s * y, self.center[1] + s * x + c * y]
    }
}

/// Least-squares algebraic conic fit constrained to ellipses (the direct
/// method with the `4ac − b² = 1` normalization, in its numerically stable
/// block form). Points are centered and scaled before fitting.
pub fn fit_ellipse(points: &[[f64; 2]]) -> Result<Ellipse> {
    if points.len() < 5 {
        return Err(Error::FitDegenerate("need at least 5 points"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InputDomain("non-finite point".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut cov = Matrix2::zeros();
    for p in points {
        let d = nalgebra::Vector2::new(p[0] - mx, p[1] - my);
        cov += d * d.transpose();
    }
    cov /= n;
    let spread = SymmetricEigen::new(cov).eigenvalues;
    let (lo, hi) = (spread.min(), spread.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(Error::FitDegenerate("points are collinear"));
    }
    let scale = (cov.trace() * 0.5).sqrt();
    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for p in points {
        let (u, v) = ((p[0] - mx) / scale, (p[1] - my) / scale);
        let q = Vector3::new(u * u, u * v, v * v);
        let l = Vector3::new(u, v, 1.0);
        s1 += q * q.transpose();
        s2 += q * l.transpose();
        s3 += l * l.transpose();
    }
    let s3_inv = s3.try_inverse().ok_or(Error::FitDegenerate("singular linear scatter"))?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // Multiply by the inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]].
    let reduced = Matrix3::from_rows(&[m.row(2) * 0.5, -m.row(1), m.row(0) * 0.5]);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in reduced.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-9 * (1.0 + lambda.re.abs()) {
            continue;
        }
        let shifted = reduced - Matrix3::identity() * lambda.re;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.ok_or(Error::FitDegenerate("eigenvector solve failed"))?;
        let k = svd.singular_values.imin();
        let a: Vector3<f64> = v_t.row(k).transpose();
        let cond = 4.0 * a[0] * a[2] - a[1] * a[1];
        if cond > 0.0 && best.map_or(true, |(l, _)| lambda.re.abs() < l) {
            best = Some((lambda.re.abs(), a));
        }
    }
    let (_, a1) = best.ok_or(Error::FitDegenerate("no elliptical solution"))?;
    let a2 = t * a1;
    let e = conic_to_ellipse([a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]])?;
    Ellipse::new(
        [e.center[0] * scale + mx, e.center[1] * scale + my],
        [e.semi_axes[0] * scale, e.semi_axes[1] * scale],
        e.angle,
    )
}

/// `A x² + B xy + C y² + D x + E y + F = 0` to center, axes and angle.
fn conic_to_ellipse([a, b, c, d, e, f]: [f64; 6]) -> Result<Ellipse> {
    let q = Matrix2::new(a, 0.5 * b, 0.5 * b, c);
    let center = (q * 2.0)
        .try_inverse()
        .ok_or(Error::FitDegenerate("conic has no center"))?
        * nalgebra::Vector2::new(-d, -e);
    let f0 = f + 0.5 * (d * center[0] + e * center[1]);
    let eig = SymmetricEigen::new(q);
    let mut axes = [0.0; 2];
    for (i, axis) in axes.iter_mut().enumerate() {
        let r = -f0 / eig.eigenvalues[i];
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::FitDegenerate("conic is not an ellipse"));
        }
        *axis = r.sqrt();
    }
    let major = if axes[0] >= axes[1] { 0 } else { 1 };
    let dir = eig.eigenvectors.column(major);
    let mut angle = dir[1].atan2(dir[0]);
    if angle <= -PI / 2.0 {
        angle += PI;
    } else if angle > PI / 2.0 {
        angle -= PI;
    }
    Ellipse::new([center[0], center[1]], [axes[major], axes[1 - major]], angle)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Overlap {
    /// Estimated area of the intersection.
    pub area: f64,
    /// Share of `a`'s samples that also fall in `b`.
    pub fraction_of_a: f64,
    /// Share of `b`'s samples that also fall in `a`.
    pub fraction_of_b: f64,
    pub samples: usize,
}

/// Monte Carlo intersection estimate over the bounding box of both ellipses.
pub fn ellipse_overlap(a: &Ellipse, b: &Ellipse, samples: usize, seed: u64) -> Result<Overlap> {
    if samples == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    let (ea, eb) = (a.half_extents(), b.half_extents());
    let lo = [(a.center[0] - ea[0]).min(b.center[0] - eb[0]), (a.center[1] - ea[1]).min(b.center[1] - eb[1])];
    let hi = [(a.center[0] + ea[0]).max(b.center[0] + eb[0]), (a.center[1] + ea[1]).max(b.center[1] + eb[1])];
    let mut rng = SeedStream::new(seed).substream(Purpose::Overlap, 0, 0);
    let (mut in_a, mut in_b, mut both) = (0usize, 0usize, 0usize);
    for _ in 0..samples {
        let p = [rng.uniform_in(lo[0], hi[0]), rng.uniform_in(lo[1], hi[1])];
        let (ia, ib) = (a.contains(p), b.contains(p));
        in_a += ia as usize;
        in_b += ib as usize;
        both += (ia && ib) as usize;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(Overlap {
        area: (hi[0] - lo[0]) * (hi[1] - lo[1]) * both as f64 / samples as f64,
        fraction_of_a: ratio(both, in_a),
        fraction_of_b: ratio(both, in_b),
        samples,
    })
}
