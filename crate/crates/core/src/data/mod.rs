//! Volumes, semantic layouts and masks.

mod phantom;
mod resample;

pub use phantom::{generate_phantom, Ellipsoid, Phantom, PhantomConfig, PhantomGeometry, Sphere};
pub use resample::{resample_layout, resample_volume};

use alloc::vec::Vec;

use crate::{Error, Result, Tensor};

/// Slack allowed on the `[-1, 1]` intensity range.
pub const RANGE_TOLERANCE: f32 = 1e-6;

/// Default source-unit window for imported scans.
pub const DEFAULT_WINDOW: (f64, f64) = (-1000.0, 500.0);

fn voxel_count(dims: [usize; 3]) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Dense intensity grid, normalized to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    values: Vec<f32>,
}

impl Volume {
    /// Validates length, finiteness and the `[-1, 1]` range.
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], values: Vec<f32>) -> Result<Self> {
        if values.len() != voxel_count(dims) {
            return Err(Error::shape("volume values", &[voxel_count(dims)], &[values.len()]));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InputDomain(alloc::format!(
                "volume value at voxel {i} is not finite"
            )));
        }
        let lim = 1.0 + RANGE_TOLERANCE;
        if let Some(i) = values.iter().position(|v| v.abs() > lim) {
            return Err(Error::InputDomain(alloc::format!(
                "volume value {} at voxel {i} outside [-1, 1]",
                values[i]
            )));
        }
        Ok(Self {
            dims,
            spacing_mm,
            values,
        })
    }

    pub fn constant(dims: [usize; 3], value: f32) -> Result<Self> {
        Self::new(dims, [1.0; 3], alloc::vec![value; voxel_count(dims)])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_spacing(mut self, spacing_mm: [f64; 3]) -> Self {
        self.spacing_mm = spacing_mm;
        self
    }

    /// Single-channel tensor view (copy) of the intensities.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(1, self.dims, self.values.clone()).expect("volume length is validated")
    }
}

/// Voxel classes of a semantic layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Label {
    Background = 0,
    Lung = 1,
    Nodule = 2,
}

impl TryFrom<u8> for Label {
    type Error = u8;

    fn try_from(v: u8) -> core::result::Result<Self, u8> {
        match v {
            0 => Ok(Label::Background),
            1 => Ok(Label::Lung),
            2 => Ok(Label::Nodule),
            other => Err(other),
        }
    }
}

/// Dense label grid over {background, lung, nodule}.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticLayout {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    labels: Vec<u8>,
}

impl SemanticLayout {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], labels: Vec<u8>) -> Result<Self> {
        if labels.len() != voxel_count(dims) {
            return Err(Error::shape("layout labels", &[voxel_count(dims)], &[labels.len()]));
        }
        if let Some(index) = labels.iter().position(|&l| l > Label::Nodule as u8) {
            return Err(Error::LabelDomain {
                index,
                value: labels[index],
            });
        }
        Ok(Self {
            dims,
            spacing_mm,
            labels,
        })
    }

    pub fn filled(dims: [usize; 3], label: Label) -> Self {
        Self {
            dims,
            spacing_mm: [1.0; 3],
            labels: alloc::vec![label as u8; voxel_count(dims)],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn with_spacing(mut self, spacing_mm: [f64; 3]) -> Self {
        self.spacing_mm = spacing_mm;
        self
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label as u8).count()
    }

    /// Whether every nodule voxel lies inside the bounding box of the
    /// lung-labelled voxels. Phantoms satisfy this by construction; imported
    /// layouts may not.
    pub fn nodules_within_lung_bounds(&self) -> bool {
        let [_, h, w] = self.dims;
        let coords = |i: usize| [i / (h * w), (i / w) % h, i % w];
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any_lung = false;
        for (i, &l) in self.labels.iter().enumerate() {
            if l == Label::Lung as u8 {
                any_lung = true;
                let c = coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
        self.labels.iter().enumerate().all(|(i, &l)| {
            if l != Label::Nodule as u8 {
                return true;
            }
            if !any_lung {
                return false;
            }
            let c = coords(i);
            (0..3).all(|a| c[a] >= lo[a] && c[a] <= hi[a])
        })
    }
}

/// Binary voxel mask with values in {0, 1}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    values: Vec<u8>,
}

impl Mask {
    pub fn new(dims: [usize; 3], values: Vec<u8>) -> Result<Self> {
        if values.len() != voxel_count(dims) {
            return Err(Error::shape("mask values", &[voxel_count(dims)], &[values.len()]));
        }
        if let Some(index) = values.iter().position(|&v| v > 1) {
            return Err(Error::MaskDomain {
                index,
                value: values[index] as f32,
            });
        }
        Ok(Self { dims, values })
    }

    /// Accepts a float grid whose entries are exactly 0.0 or 1.0.
    pub fn from_f32(dims: [usize; 3], values: &[f32]) -> Result<Self> {
        if values.len() != voxel_count(dims) {
            return Err(Error::shape("mask values", &[voxel_count(dims)], &[values.len()]));
        }
        let mut out = Vec::with_capacity(values.len());
        for (index, &v) in values.iter().enumerate() {
            if v == 0.0 {
                out.push(0);
            } else if v == 1.0 {
                out.push(1);
            } else {
                return Err(Error::MaskDomain { index, value: v });
            }
        }
        Ok(Self { dims, values: out })
    }

    pub fn filled(dims: [usize; 3], on: bool) -> Self {
        Self {
            dims,
            values: alloc::vec![on as u8; voxel_count(dims)],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.values[i] != 0
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn complement(&self) -> Mask {
        Mask {
            dims: self.dims,
            values: self.values.iter().map(|&v| 1 - v).collect(),
        }
    }
}

/// Lung mask (lung ∪ nodule) and its complement, the extra-pulmonary mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskPair {
    pub lung: Mask,
    pub extra: Mask,
}

/// `m_l = [label ∈ {lung, nodule}]`, `m_e = 1 - m_l`.
pub fn derive_masks(layout: &SemanticLayout) -> MaskPair {
    let lung = Mask {
        dims: layout.dims,
        values: layout.labels.iter().map(|&l| (l != 0) as u8).collect(),
    };
    let extra = lung.complement();
    MaskPair { lung, extra }
}

/// Which layout channels condition the denoiser.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Conditioning {
    /// One-hot lung and nodule channels.
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "lung+nodule"))]
    LungAndNodule,
    /// Nodule channel only (no lung layout).
    #[cfg_attr(feature = "serde", serde(rename = "nodule"))]
    NoduleOnly,
}

impl Conditioning {
    pub fn channels(self) -> usize {
        match self {
            Conditioning::LungAndNodule => 2,
            Conditioning::NoduleOnly => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Conditioning::LungAndNodule => "lung+nodule",
            Conditioning::NoduleOnly => "nodule",
        }
    }
}

impl core::str::FromStr for Conditioning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lung+nodule" | "lung-and-nodule" => Ok(Conditioning::LungAndNodule),
            "nodule" | "nodule-only" => Ok(Conditioning::NoduleOnly),
            other => Err(Error::config(
                "conditioning",
                alloc::format!("unknown conditioning `{other}` (expected lung+nodule or nodule)"),
            )),
        }
    }
}

/// Binary conditioning channels: `[label == lung, label == nodule]`, or just
/// the nodule channel.
pub fn layout_to_channels(layout: &SemanticLayout, conditioning: Conditioning) -> Tensor<f32> {
    let n = layout.labels.len();
    let mut data = Vec::with_capacity(conditioning.channels() * n);
    if conditioning == Conditioning::LungAndNodule {
        data.extend(layout.labels.iter().map(|&l| (l == Label::Lung as u8) as u8 as f32));
    }
    data.extend(layout.labels.iter().map(|&l| (l == Label::Nodule as u8) as u8 as f32));
    Tensor::from_vec(conditioning.channels(), layout.dims, data).expect("length matches")
}

/// Clip to `window` then map affinely onto `[-1, 1]`.
pub fn normalize_intensity(
    raw: &[f32],
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    window: (f64, f64),
) -> Result<Volume> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::config("window", "lower bound must be below upper bound"));
    }
    if raw.len() != voxel_count(dims) {
        return Err(Error::shape("raw intensities", &[voxel_count(dims)], &[raw.len()]));
    }
    let scale = 2.0 / (hi - lo);
    let values = raw
        .iter()
        .map(|&v| {
            let c = (v as f64).clamp(lo, hi);
            ((c - lo) * scale - 1.0).clamp(-1.0, 1.0) as f32
        })
        .collect();
    Volume::new(dims, spacing_mm, values)
}
