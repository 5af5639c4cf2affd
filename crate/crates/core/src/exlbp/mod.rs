//! Extended LBP descriptor (a global uniform-pattern histogram plus nine
//! overlapping block histograms of a 16x16 resample) and the linear SVM that
//! uses it to reject candidate windows.

mod lbp;
mod svm;

pub use lbp::{
    coarse_histogram, fine_features, lbp_label_image, resize_to_16, transitions, uniform_pattern_table,
    LbpLabelImage, BLOCK_OFFSETS, BLOCK_SIZE, COARSE_BINS, FINE_BINS, FINE_BLOCKS, FINE_LEN, FINE_PATCH,
};
pub use svm::{svm_objective, train_svm, LinearSvmModel, SvmParams};

use rayon::prelude::*;

use crate::haar::Detection;
use crate::image::{resize_bilinear, GrayImage};
use crate::{Error, Result};

pub const FEATURE_LEN: usize = COARSE_BINS + FINE_LEN;

pub const UNIT_BLOCK_WEIGHTS: [f64; FINE_BLOCKS] = [1.0; FINE_BLOCKS];

pub fn check_block_weights(weights: &[f64; FINE_BLOCKS]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "block weights must be finite and non-negative, got {weights:?}"
        )));
    }
    Ok(())
}

/// Coarse part then fine part, each L1-normalised, with block weights
/// applied to the fine part afterwards.
pub fn validation_feature(window: &GrayImage, block_weights: &[f64; FINE_BLOCKS]) -> Result<Vec<f64>> {
    check_block_weights(block_weights)?;
    let coarse = coarse_histogram(&lbp_label_image(window)?);
    let fine = fine_features(&resize_to_16(window)?)?;
    let mut out = Vec::with_capacity(FEATURE_LEN);
    let total: u32 = coarse.iter().sum();
    out.extend(coarse.iter().map(|&c| c as f64 / total as f64));
    let total: u32 = fine.iter().sum();
    for (i, &c) in fine.iter().enumerate() {
        out.push(c as f64 / total as f64 * block_weights[i / FINE_BINS]);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationParams {
    pub threshold: f64,
    pub block_weights: [f64; FINE_BLOCKS],
    /// Resample each crop to this square size before extracting features,
    /// so candidates of every scale are described like the training windows.
    pub sample_size: Option<usize>,
}

impl Default for ValidationParams {
    fn default() -> Self {
        ValidationParams {
            threshold: 0.0,
            block_weights: UNIT_BLOCK_WEIGHTS,
            sample_size: None,
        }
    }
}

/// Largest value the fine part can add to a decision: every block carries
/// exactly 1/9 of the normalised fine mass.
fn fine_bound(model: &LinearSvmModel, block_weights: &[f64; FINE_BLOCKS]) -> f64 {
    let fine = &model.weights[COARSE_BINS..];
    (0..FINE_BLOCKS)
        .map(|b| {
            let best = fine[b * FINE_BINS..(b + 1) * FINE_BINS]
                .iter()
                .fold(f64::NEG_INFINITY, |m, &w| m.max(w * block_weights[b]));
            best / FINE_BLOCKS as f64
        })
        .sum()
}

/// Outcome of the two-step check on one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    /// Rejected from the coarse histogram alone.
    CoarseReject,
    Decided { value: f64 },
}

pub struct Validator<'a> {
    model: &'a LinearSvmModel,
    params: ValidationParams,
    fine_bound: f64,
}

impl<'a> Validator<'a> {
    pub fn new(model: &'a LinearSvmModel, params: ValidationParams) -> Result<Self> {
        check_block_weights(&params.block_weights)?;
        if params.sample_size.is_some_and(|s| s < 3) {
            return Err(Error::InvalidParameter("validation sample size must be >= 3".into()));
        }
        if params.threshold.is_nan() {
            return Err(Error::InvalidParameter("svm threshold is NaN".into()));
        }
        Ok(Validator {
            model,
            params,
            fine_bound: fine_bound(model, &params.block_weights),
        })
    }

    /// Full decision value of a window.
    pub fn decision(&self, window: &GrayImage) -> Result<f64> {
        Ok(self.model.decision(&validation_feature(window, &self.params.block_weights)?))
    }

    pub fn judge(&self, window: &GrayImage) -> Result<Verdict> {
        let coarse = coarse_histogram(&lbp_label_image(window)?);
        let total: u32 = coarse.iter().sum();
        let partial: f64 = coarse
            .iter()
            .zip(&self.model.weights)
            .map(|(&c, w)| c as f64 / total as f64 * w)
            .sum::<f64>()
            + self.model.bias;
        let upper = partial + self.fine_bound;
        let slack = 1e-9 * (1.0 + partial.abs() + self.fine_bound.abs());
        if upper + slack < self.params.threshold {
            return Ok(Verdict::CoarseReject);
        }
        Ok(Verdict::Decided {
            value: self.decision(window)?,
        })
    }

    pub fn accepts(&self, window: &GrayImage) -> Result<bool> {
        Ok(match self.judge(window)? {
            Verdict::CoarseReject => false,
            Verdict::Decided { value } => value >= self.params.threshold,
        })
    }
}

/// Keeps the detections whose crop the SVM scores at or above the
/// threshold. Returns the kept detections in input order and how many were
/// dropped.
pub fn validate_detections(
    dets: &[Detection],
    img: &GrayImage,
    model: &LinearSvmModel,
    params: &ValidationParams,
) -> Result<(Vec<Detection>, usize)> {
    let validator = Validator::new(model, *params)?;
    let verdicts: Vec<bool> = dets
        .par_iter()
        .map(|d| {
            let crop = img.crop(d.rect)?;
            match params.sample_size {
                Some(s) => validator.accepts(&resize_bilinear(&crop, s, s)?),
                None => validator.accepts(&crop),
            }
        })
        .collect::<Result<_>>()?;
    let kept: Vec<Detection> = dets
        .iter()
        .zip(&verdicts)
        .filter(|(_, &ok)| ok)
        .map(|(d, _)| *d)
        .collect();
    let rejected = dets.len() - kept.len();
    Ok((kept, rejected))
}
