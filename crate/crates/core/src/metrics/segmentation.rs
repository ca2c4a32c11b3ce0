use crate::data::Mask;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(pred: &Mask, truth: &Mask) -> Result<Confusion> {
    if pred.dims() != truth.dims() {
        return Err(Error::shape("segmentation masks", &truth.dims(), &pred.dims()));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `2|P∩T| / (|P| + |T|)`; two empty masks agree perfectly and score 1.
pub fn dice(pred: &Mask, truth: &Mask) -> Result<f64> {
    let c = confusion(pred, truth)?;
    let denom = 2 * c.tp + c.fp + c.fn_;
    Ok(if denom == 0 { 1.0 } else { (2 * c.tp) as f64 / denom as f64 })
}

pub fn sensitivity(pred: &Mask, truth: &Mask) -> Result<f64> {
    let c = confusion(pred, truth)?;
    if c.tp + c.fn_ == 0 {
        return Err(Error::EmptyTruth);
    }
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

pub fn specificity(pred: &Mask, truth: &Mask) -> Result<f64> {
    let c = confusion(pred, truth)?;
    if c.tn + c.fp == 0 {
        return Err(Error::EmptyNegatives);
    }
    Ok(c.tn as f64 / (c.tn + c.fp) as f64)
}
