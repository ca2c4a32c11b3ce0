//! Procedural thorax phantom.
//!
//! Geometry lives in normalized coordinates `[-1, 1]³` (voxel centers at
//! `(i + 0.5) / n * 2 - 1`): a bright body ellipsoid, two dark lung
//! ellipsoids inside it and one to three bright spherical nodules strictly
//! inside the lungs. Labels are rasterized from the same equations, so
//! label/geometry consistency holds exactly.

use alloc::vec::Vec;

use super::{Label, SemanticLayout, Volume};
use crate::rng::{Purpose, SeedStream, Substream};
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct PhantomConfig {
    /// Cube side in voxels (at least 16).
    pub resolution: usize,
    pub field_of_view_mm: f64,
    /// Body semi-axes ranges `(z, y, x)`.
    pub body_semi_axes: [[f64; 2]; 3],
    /// Distance of each lung center from the midline along `x`.
    pub lung_offset: [f64; 2],
    /// Lung semi-axes ranges `(z, y, x)`.
    pub lung_semi_axes: [[f64; 2]; 3],
    /// Inclusive range for the number of nodules.
    pub nodule_count: [usize; 2],
    pub nodule_radius: [f64; 2],
    pub background_intensity: f32,
    pub body_intensity: f32,
    pub lung_intensity: f32,
    pub nodule_intensity: f32,
    /// Standard deviation of the additive Gaussian texture.
    pub noise_amplitude: f32,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            field_of_view_mm: 350.0,
            body_semi_axes: [[0.85, 0.95], [0.62, 0.72], [0.80, 0.90]],
            lung_offset: [0.36, 0.42],
            lung_semi_axes: [[0.50, 0.62], [0.38, 0.46], [0.20, 0.26]],
            nodule_count: [1, 3],
            nodule_radius: [0.08, 0.13],
            background_intensity: -1.0,
            body_intensity: 0.35,
            lung_intensity: -0.75,
            nodule_intensity: 0.3,
            noise_amplitude: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
}

impl Ellipsoid {
    /// `sum(((p - c) / a)²)`; inside when `<= 1`.
    pub fn level(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|a| {
                let d = (p[a] - self.center[a]) / self.semi_axes[a];
                d * d
            })
            .sum()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.level(p) <= 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let d2: f64 = (0..3).map(|a| (p[a] - self.center[a]).powi(2)).sum();
        d2 <= self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomGeometry {
    pub body: Ellipsoid,
    pub lungs: [Ellipsoid; 2],
    pub nodules: Vec<Sphere>,
}

impl PhantomGeometry {
    pub fn label_at(&self, p: [f64; 3]) -> Label {
        if self.nodules.iter().any(|n| n.contains(p)) {
            Label::Nodule
        } else if self.lungs.iter().any(|l| l.contains(p)) {
            Label::Lung
        } else {
            Label::Background
        }
    }
}

/// Normalized coordinate of voxel center `i` on an axis of `n` voxels.
pub(crate) fn voxel_center(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64 * 2.0 - 1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub volume: Volume,
    pub layout: SemanticLayout,
    pub geometry: PhantomGeometry,
}

fn draw(rng: &mut Substream, range: [f64; 2]) -> f64 {
    rng.uniform_in(range[0], range[1])
}

fn check_range(field: &'static str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if !(r[0] <= r[1] && r[0] > lo && r[1] < hi) {
        return Err(Error::config(field, alloc::format!("range must be ordered within ({lo}, {hi})")));
    }
    Ok(())
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 {
            return Err(Error::config("resolution", "phantoms need at least 16 voxels per side"));
        }
        if !(self.field_of_view_mm > 0.0) {
            return Err(Error::config("field_of_view_mm", "must be positive"));
        }
        for r in &self.body_semi_axes {
            check_range("body_semi_axes", *r, 0.0, 1.0 + 1e-9)?;
        }
        for r in &self.lung_semi_axes {
            check_range("lung_semi_axes", *r, 0.0, 1.0)?;
        }
        check_range("lung_offset", self.lung_offset, 0.0, 1.0)?;
        check_range("nodule_radius", self.nodule_radius, 0.0, 1.0)?;
        if self.nodule_count[0] > self.nodule_count[1] {
            return Err(Error::config("nodule_count", "range must be ordered"));
        }
        for (field, v) in [
            ("background_intensity", self.background_intensity),
            ("body_intensity", self.body_intensity),
            ("lung_intensity", self.lung_intensity),
            ("nodule_intensity", self.nodule_intensity),
        ] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::config(field, "intensity must lie in [-1, 1]"));
            }
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::config("noise_amplitude", "must be non-negative"));
        }
        Ok(())
    }
}

/// Lung surface samples must sit inside the body with some clearance.
fn lung_fits(body: &Ellipsoid, lung: &Ellipsoid) -> bool {
    const RINGS: usize = 24;
    const SEGMENTS: usize = 48;
    for i in 0..=RINGS {
        let theta = core::f64::consts::PI * i as f64 / RINGS as f64;
        for j in 0..SEGMENTS {
            let phi = 2.0 * core::f64::consts::PI * j as f64 / SEGMENTS as f64;
            let dir = [theta.cos(), theta.sin() * phi.sin(), theta.sin() * phi.cos()];
            let p: [f64; 3] = core::array::from_fn(|a| lung.center[a] + lung.semi_axes[a] * dir[a]);
            if body.level(p) > 0.95 {
                return false;
            }
        }
    }
    true
}

fn sample_geometry(cfg: &PhantomConfig, rng: &mut Substream) -> Result<PhantomGeometry> {
    let body = Ellipsoid {
        center: [0.0; 3],
        semi_axes: core::array::from_fn(|a| draw(rng, cfg.body_semi_axes[a])),
    };
    let mut lungs = [body; 2];
    for (side, lung) in lungs.iter_mut().enumerate() {
        let sign = if side == 0 { -1.0 } else { 1.0 };
        let semi_axes: [f64; 3] = core::array::from_fn(|a| draw(rng, cfg.lung_semi_axes[a]));
        let offset = draw(rng, cfg.lung_offset);
        if semi_axes[2] >= offset {
            return Err(Error::Generation(alloc::format!(
                "lung half-width {:.3} reaches the midline (offset {:.3})",
                semi_axes[2],
                offset
            )));
        }
        *lung = Ellipsoid {
            center: [0.0, 0.0, sign * offset],
            semi_axes,
        };
        if !lung_fits(&body, lung) {
            return Err(Error::Generation(alloc::format!(
                "lung ellipsoid {:?} does not fit inside body {:?}",
                lung.semi_axes,
                body.semi_axes
            )));
        }
    }

    let voxel_half_diagonal = 3f64.sqrt() / cfg.resolution as f64;
    let count = cfg.nodule_count[0] + rng.below((cfg.nodule_count[1] - cfg.nodule_count[0] + 1) as u64) as usize;
    let mut nodules = Vec::with_capacity(count);
    for _ in 0..count {
        let lung = lungs[rng.below(2) as usize];
        let min_axis = lung.semi_axes.iter().copied().fold(f64::INFINITY, f64::min);
        let radius = draw(rng, cfg.nodule_radius).max(voxel_half_diagonal * 1.01);
        if radius >= min_axis {
            return Err(Error::Generation(alloc::format!(
                "nodule radius {radius:.3} does not fit in a lung with semi-axis {min_axis:.3}"
            )));
        }
        // If |D^-1 (c - c_l)| <= 1 - r/m then the ball B(c, r) lies inside the
        // lung, since |D^-1 d| <= |d| / m for any offset d.
        let shrink = 1.0 - radius / min_axis;
        let unit = loop {
            let p: [f64; 3] = core::array::from_fn(|_| rng.uniform_in(-1.0, 1.0));
            if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break p;
            }
        };
        nodules.push(Sphere {
            center: core::array::from_fn(|a| lung.center[a] + shrink * lung.semi_axes[a] * unit[a]),
            radius,
        });
    }
    Ok(PhantomGeometry { body, lungs, nodules })
}

/// Deterministic phantom for `seed`.
pub fn generate_phantom(seed: u64, cfg: &PhantomConfig) -> Result<Phantom> {
    cfg.validate()?;
    let root = SeedStream::new(seed);
    let geometry = sample_geometry(cfg, &mut root.substream(Purpose::Phantom, 0, 0))?;
    let mut noise = root.substream(Purpose::Phantom, 1, 0);
    let n = cfg.resolution;
    let mut values = Vec::with_capacity(n * n * n);
    let mut labels = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let p = [voxel_center(z, n), voxel_center(y, n), voxel_center(x, n)];
                let label = geometry.label_at(p);
                let base = match label {
                    Label::Nodule => cfg.nodule_intensity,
                    Label::Lung => cfg.lung_intensity,
                    Label::Background if geometry.body.contains(p) => cfg.body_intensity,
                    Label::Background => cfg.background_intensity,
                };
                let v = base + cfg.noise_amplitude * noise.normal() as f32;
                values.push(v.clamp(-1.0, 1.0));
                labels.push(label as u8);
            }
        }
    }
    let spacing = [cfg.field_of_view_mm / n as f64; 3];
    Ok(Phantom {
        volume: Volume::new([n; 3], spacing, values)?,
        layout: SemanticLayout::new([n; 3], spacing, labels)?,
        geometry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let cfg = PhantomConfig::default();
        let a = generate_phantom(11, &cfg).unwrap();
        let b = generate_phantom(11, &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(12, &cfg).unwrap();
        assert_ne!(a.volume, c.volume);
    }

    #[test]
    fn labels_follow_geometry() {
        let cfg = PhantomConfig { resolution: 24, ..PhantomConfig::default() };
        for seed in 0..10 {
            let ph = generate_phantom(seed, &cfg).unwrap();
            let n = cfg.resolution;
            let g = &ph.geometry;
            assert!((1..=3).contains(&g.nodules.len()));
            assert!(ph.layout.count(Label::Nodule) > 0, "seed {seed}");
            for (i, &l) in ph.layout.labels().iter().enumerate() {
                let p = [voxel_center(i / (n * n), n), voxel_center((i / n) % n, n), voxel_center(i % n, n)];
                if l == Label::Nodule as u8 {
                    assert!(g.nodules.iter().any(|s| s.contains(p)));
                }
                if l != 0 {
                    assert!(g.lungs.iter().any(|e| e.contains(p)));
                    assert!(g.body.contains(p));
                }
            }
            assert!(ph.layout.nodules_within_lung_bounds());
        }
    }

    #[test]
    fn lungs_darker_than_body_wall() {
        let cfg = PhantomConfig::default();
        for seed in 0..100 {
            let ph = generate_phantom(seed, &cfg).unwrap();
            let n = cfg.resolution;
            let (mut lung, mut nl, mut wall, mut nw) = (0.0f64, 0usize, 0.0f64, 0usize);
            for (i, (&v, &l)) in ph.volume.values().iter().zip(ph.layout.labels()).enumerate() {
                let p = [voxel_center(i / (n * n), n), voxel_center((i / n) % n, n), voxel_center(i % n, n)];
                if l == Label::Lung as u8 {
                    lung += v as f64;
                    nl += 1;
                } else if l == 0 && ph.geometry.body.contains(p) {
                    wall += v as f64;
                    nw += 1;
                }
            }
            assert!(lung / (nl as f64) < wall / (nw as f64), "seed {seed}");
        }
    }

    #[test]
    fn impossible_configs_fail() {
        let too_small = PhantomConfig { resolution: 8, ..PhantomConfig::default() };
        assert!(matches!(generate_phantom(0, &too_small), Err(Error::Config { field: "resolution", .. })));
        let big_lungs = PhantomConfig {
            body_semi_axes: [[0.5, 0.5], [0.4, 0.4], [0.5, 0.5]],
            ..PhantomConfig::default()
        };
        assert!(matches!(generate_phantom(0, &big_lungs), Err(Error::Generation(_))));
    }
}
