//! The full detector: preprocessing, skin segmentation, cascade scan,
//! grouping and ExLBP validation, plus the sample plumbing used to train
//! the validator.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{PipelineConfig, PreprocessParams};
use crate::exlbp::{train_svm, validate_detections, validation_feature, LinearSvmModel, ValidationParams};
use crate::haar::boost::{allowed_misses, quantize};
use crate::haar::{detect_multiscale, merge_detections, Cascade, Detection, ScanStats};
use crate::image::pnm::PnmImage;
use crate::image::{downscale, histogram_equalization, median_filter, resize_bilinear, rgb_to_ycbcr, to_grayscale};
use crate::image::{GrayImage, RgbImage};
use crate::skin::{classify_skin, refine_mask, sobel_edges, BinaryMask};
use crate::{Error, Rect, Result};

/// Median filter then histogram equalisation, as configured.
pub fn preprocess_gray(img: &GrayImage, p: &PreprocessParams) -> Result<GrayImage> {
    let mut out = if p.median_radius > 0 {
        median_filter(img, p.median_radius)?
    } else {
        img.clone()
    };
    if p.equalize {
        out = histogram_equalization(&out);
    }
    Ok(out)
}

/// Refined skin mask of a colour image at its own resolution.
pub fn segment_skin(img: &RgbImage, cfg: &PipelineConfig) -> Result<BinaryMask> {
    let skin = classify_skin(&rgb_to_ycbcr(img), &cfg.skin);
    let edges = sobel_edges(&to_grayscale(img), cfg.sobel_threshold)?;
    refine_mask(&skin, &edges)
}

/// An image reduced to the detector's working resolution.
pub struct Prepared {
    pub gray: GrayImage,
    pub skin: Option<BinaryMask>,
    /// Working pixels per input pixel, inverted: input = working * factor.
    pub factor: usize,
}

pub fn prepare(img: &PnmImage, cfg: &PipelineConfig) -> Result<Prepared> {
    let factor = cfg.preprocess.downscale;
    let (gray, skin) = match img {
        PnmImage::Rgb(rgb) => {
            let small = rgb.downscale(factor)?;
            let skin = if cfg.skin_gating {
                Some(segment_skin(&small, cfg)?)
            } else {
                None
            };
            (to_grayscale(&small), skin)
        }
        PnmImage::Gray(g) => (downscale(g, factor)?, None),
    };
    Ok(Prepared {
        gray: preprocess_gray(&gray, &cfg.preprocess)?,
        skin,
        factor,
    })
}

/// Moves a square box inside a `w x h` image without resizing it.
fn clamp_box(r: Rect, w: usize, h: usize) -> Rect {
    let s = r.w.min(w).min(h);
    Rect::square(r.x.min(w - s), r.y.min(h - s), s)
}

fn rescale(d: &Detection, factor: usize) -> Detection {
    Detection {
        rect: Rect::new(d.rect.x * factor, d.rect.y * factor, d.rect.w * factor, d.rect.h * factor),
        ..*d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectOutput {
    /// Grouped cascade detections, input coordinates.
    pub candidates: Vec<Detection>,
    /// Candidates surviving validation; `None` when validation was skipped.
    pub validated: Option<Vec<Detection>>,
    pub stats: ScanStats,
    pub rejected: usize,
}

impl DetectOutput {
    /// Final detections: validated when available, candidates otherwise.
    pub fn detections(&self) -> &[Detection] {
        self.validated.as_deref().unwrap_or(&self.candidates)
    }
}

pub struct Detector<'a> {
    pub cascade: &'a Cascade,
    pub svm: Option<&'a LinearSvmModel>,
    pub cfg: &'a PipelineConfig,
}

impl Detector<'_> {
    pub fn detect(&self, img: &PnmImage) -> Result<DetectOutput> {
        self.detect_prepared(&prepare(img, self.cfg)?)
    }

    pub fn detect_prepared(&self, p: &Prepared) -> Result<DetectOutput> {
        let cfg = self.cfg;
        if self.cascade.base_window != cfg.cascade.base_window {
            return Err(Error::InvalidParameter(format!(
                "model base window {} does not match configured {}",
                self.cascade.base_window, cfg.cascade.base_window
            )));
        }
        let (w, h) = (p.gray.width(), p.gray.height());
        let (raw, stats) = detect_multiscale(self.cascade, &p.gray, p.skin.as_ref(), &cfg.scan)?;
        let merged: Vec<Detection> = merge_detections(&raw, cfg.min_neighbors, cfg.overlap)?
            .into_iter()
            .map(|d| Detection {
                rect: clamp_box(d.rect, w, h),
                ..d
            })
            .collect();
        let (validated, rejected) = match self.svm {
            Some(model) => {
                let params = ValidationParams {
                    sample_size: Some(self.cascade.base_window),
                    ..cfg.validation
                };
                let (kept, rejected) = validate_detections(&merged, &p.gray, model, &params)?;
                (Some(kept.iter().map(|d| rescale(d, p.factor)).collect()), rejected)
            }
            None => (None, 0),
        };
        Ok(DetectOutput {
            candidates: merged.iter().map(|d| rescale(d, p.factor)).collect(),
            validated,
            stats,
            rejected,
        })
    }
}

/// Crop of `rect` resampled to `size x size`.
pub fn extract_window(img: &GrayImage, rect: Rect, size: usize) -> Result<GrayImage> {
    resize_bilinear(&img.crop(rect)?, size, size)
}

/// Raw cascade-accepted windows from face-free images, resampled to the
/// base window. At most `limit` are kept, chosen by seeded sampling.
pub fn mine_false_positives(
    cascade: &Cascade,
    backgrounds: &[GrayImage],
    cfg: &PipelineConfig,
    limit: usize,
) -> Result<Vec<GrayImage>> {
    let base = cascade.base_window;
    let per_image: Vec<Vec<GrayImage>> = backgrounds
        .par_iter()
        .map(|img| {
            let (dets, _) = detect_multiscale(cascade, img, None, &cfg.scan)?;
            dets.iter().map(|d| extract_window(img, d.rect, base)).collect()
        })
        .collect::<Result<_>>()?;
    let all: Vec<GrayImage> = per_image.into_iter().flatten().collect();
    Ok(subsample(all, limit, cfg.seed() ^ 0x5be0_cd19_137e_2179))
}

fn subsample<T: Clone>(items: Vec<T>, limit: usize, seed: u64) -> Vec<T> {
    if items.len() <= limit {
        return items;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, items.len(), limit).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

/// Trains the validator on the positives against negatives that the cascade
/// still accepts: the given negatives plus windows mined from backgrounds.
/// Negatives are subsampled to the positive count so both classes weigh
/// the same in the hinge loss. Like a cascade stage, the bias is then
/// lowered if needed so that the configured threshold keeps `target_dr` of
/// the positives.
pub fn train_validator(
    cascade: &Cascade,
    positives: &[GrayImage],
    negatives: &[GrayImage],
    backgrounds: &[GrayImage],
    cfg: &PipelineConfig,
) -> Result<LinearSvmModel> {
    let base = cascade.base_window;
    let scaled = cascade.scaled(base);
    let mut hard: Vec<GrayImage> = negatives
        .iter()
        .filter(|n| {
            let ii = crate::haar::Integrals::new(n, cascade.uses_tilted());
            scaled.classify_at(&ii, 0, 0).0
        })
        .cloned()
        .collect();
    hard.extend(mine_false_positives(cascade, backgrounds, cfg, positives.len() * 4)?);
    if hard.is_empty() {
        // the cascade rejects everything negative we have; fall back to the raw set
        hard = negatives.to_vec();
    }
    let hard = subsample(hard, positives.len(), cfg.seed() ^ 0x1f83_d9ab_fb41_bd6b);
    let w = &cfg.validation.block_weights;
    let mut features = Vec::with_capacity(positives.len() + hard.len());
    let mut labels = Vec::with_capacity(features.capacity());
    for (set, y) in [(positives, 1i8), (&hard[..], -1)] {
        let f: Vec<Vec<f64>> = set.par_iter().map(|s| validation_feature(s, w)).collect::<Result<_>>()?;
        labels.extend(std::iter::repeat_n(y, f.len()));
        features.extend(f);
    }
    let mut model = train_svm(&features, &labels, &cfg.svm)?;
    let threshold = cfg.validation.threshold;
    let mut pos_values: Vec<f64> = features[..positives.len()].iter().map(|x| model.decision(x)).collect();
    pos_values.sort_by(f64::total_cmp);
    let k = allowed_misses(cfg.cascade.stage.target_dr, pos_values.len());
    if pos_values[k] < threshold {
        let lift = threshold - pos_values[k];
        let mut bias = quantize(model.bias + lift);
        // the stored bias has nine digits; nudge until the k-th positive clears
        while pos_values[k] - model.bias + bias < threshold {
            bias = quantize(bias + (bias.abs() * 1e-8).max(1e-12));
        }
        model.bias = bias;
    }
    Ok(model)
}
