use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("mask value {value} at voxel {index} is not binary")]
    MaskDomain { index: usize, value: f32 },

    #[error("label {value} at voxel {index} is outside {{0, 1, 2}}")]
    LabelDomain { index: usize, value: u8 },

    #[error("non-finite value in {context}{}", step_suffix(*.step))]
    NumericHealth {
        context: &'static str,
        step: Option<u64>,
    },

    #[error("denoising step requires t >= 1")]
    StepUnderflow,

    #[error("time step {t} outside 0..={max}")]
    StepRange { t: usize, max: usize },

    #[error("degenerate mask: {0}")]
    DegenerateMask(&'static str),

    #[error("{what} needs at least {needed} samples, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("sensitivity is undefined for an empty ground-truth mask")]
    EmptyTruth,

    #[error("specificity is undefined when the ground truth has no negative voxels")]
    EmptyNegatives,

    #[error("ellipse fit is degenerate: {0}")]
    FitDegenerate(&'static str),

    #[error("invalid input: {0}")]
    InputDomain(String),

    #[error("phantom generation failed: {0}")]
    Generation(String),
}

fn step_suffix(step: Option<u64>) -> String {
    match step {
        Some(s) => alloc::format!(" at step {s}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
