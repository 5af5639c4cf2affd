//! Pipeline settings read from `key = value` text, with every key optional.

use std::fmt::Write as _;
use std::path::Path;

use crate::exlbp::{check_block_weights, SvmParams, ValidationParams, FINE_BLOCKS};
use crate::haar::{CascadeParams, ScanParams};
use crate::skin::SkinThresholds;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PreprocessParams {
    pub downscale: usize,
    /// 0 disables the median filter.
    pub median_radius: usize,
    pub equalize: bool,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        PreprocessParams {
            downscale: 1,
            median_radius: 1,
            equalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub preprocess: PreprocessParams,
    pub skin: SkinThresholds,
    pub sobel_threshold: f64,
    /// Restrict scanning to skin-coloured windows.
    pub skin_gating: bool,
    pub cascade: CascadeParams,
    pub scan: ScanParams,
    pub min_neighbors: usize,
    pub overlap: f64,
    pub validation: ValidationParams,
    pub svm: SvmParams,
    pub iou: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocess: PreprocessParams::default(),
            skin: SkinThresholds::default(),
            sobel_threshold: 100.0,
            skin_gating: true,
            cascade: CascadeParams::default(),
            scan: ScanParams::default(),
            min_neighbors: 4,
            overlap: 0.6,
            validation: ValidationParams::default(),
            svm: SvmParams::default(),
            iou: crate::eval::DEFAULT_IOU,
        }
    }
}

pub const KEYS: &[&str] = &[
    "downscale",
    "median_radius",
    "equalize",
    "cb_min",
    "cb_max",
    "cr_min",
    "cr_max",
    "sobel_threshold",
    "skin_gating",
    "stages",
    "target_dr",
    "max_fpr",
    "max_stumps",
    "base_window",
    "max_features",
    "mining_attempts",
    "seed",
    "scale_factor",
    "step",
    "min_skin_fraction",
    "min_neighbors",
    "overlap",
    "svm_threshold",
    "block_weights",
    "svm_reg",
    "svm_epochs",
    "iou",
];

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value `{v}` for `{key}`")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("bad boolean `{v}` for `{key}`"))),
    }
}

pub fn parse_block_weights(v: &str) -> Result<[f64; FINE_BLOCKS]> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|p| value::<f64>("block_weights", p.trim()))
        .collect::<Result<_>>()?;
    let weights: [f64; FINE_BLOCKS] = parts.try_into().map_err(|p: Vec<f64>| {
        Error::InvalidParameter(format!("block_weights needs {FINE_BLOCKS} values, got {}", p.len()))
    })?;
    check_block_weights(&weights)?;
    Ok(weights)
}

impl PipelineConfig {
    /// Applies one setting. Values are checked for syntax here and for
    /// range in [`PipelineConfig::validate`].
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "downscale" => self.preprocess.downscale = value(key, v)?,
            "median_radius" => self.preprocess.median_radius = value(key, v)?,
            "equalize" => self.preprocess.equalize = boolean(key, v)?,
            "cb_min" => self.skin.cb_min = value(key, v)?,
            "cb_max" => self.skin.cb_max = value(key, v)?,
            "cr_min" => self.skin.cr_min = value(key, v)?,
            "cr_max" => self.skin.cr_max = value(key, v)?,
            "sobel_threshold" => self.sobel_threshold = value(key, v)?,
            "skin_gating" => self.skin_gating = boolean(key, v)?,
            "stages" => self.cascade.stages = value(key, v)?,
            "target_dr" => self.cascade.stage.target_dr = value(key, v)?,
            "max_fpr" => self.cascade.stage.max_fpr = value(key, v)?,
            "max_stumps" => self.cascade.stage.max_stumps = value(key, v)?,
            "base_window" => self.cascade.base_window = value(key, v)?,
            "max_features" => {
                self.cascade.max_features = match v {
                    "all" => None,
                    _ => Some(value(key, v)?),
                }
            }
            "mining_attempts" => self.cascade.mining_attempts = value(key, v)?,
            "seed" => self.set_seed(value(key, v)?),
            "scale_factor" => self.scan.scale_factor = value(key, v)?,
            "step" => self.scan.step = value(key, v)?,
            "min_skin_fraction" => self.scan.min_skin_fraction = value(key, v)?,
            "min_neighbors" => self.min_neighbors = value(key, v)?,
            "overlap" => self.overlap = value(key, v)?,
            "svm_threshold" => self.validation.threshold = value(key, v)?,
            "block_weights" => self.validation.block_weights = parse_block_weights(v)?,
            "svm_reg" => self.svm.reg = value(key, v)?,
            "svm_epochs" => self.svm.epochs = value(key, v)?,
            "iou" => self.iou = value(key, v)?,
            _ => return Err(Error::InvalidParameter(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.cascade.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.cascade.seed = seed;
        self.svm.seed = seed;
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "downscale" => self.preprocess.downscale.to_string(),
            "median_radius" => self.preprocess.median_radius.to_string(),
            "equalize" => self.preprocess.equalize.to_string(),
            "cb_min" => self.skin.cb_min.to_string(),
            "cb_max" => self.skin.cb_max.to_string(),
            "cr_min" => self.skin.cr_min.to_string(),
            "cr_max" => self.skin.cr_max.to_string(),
            "sobel_threshold" => self.sobel_threshold.to_string(),
            "skin_gating" => self.skin_gating.to_string(),
            "stages" => self.cascade.stages.to_string(),
            "target_dr" => self.cascade.stage.target_dr.to_string(),
            "max_fpr" => self.cascade.stage.max_fpr.to_string(),
            "max_stumps" => self.cascade.stage.max_stumps.to_string(),
            "base_window" => self.cascade.base_window.to_string(),
            "max_features" => self.cascade.max_features.map_or("all".into(), |n| n.to_string()),
            "mining_attempts" => self.cascade.mining_attempts.to_string(),
            "seed" => self.seed().to_string(),
            "scale_factor" => self.scan.scale_factor.to_string(),
            "step" => self.scan.step.to_string(),
            "min_skin_fraction" => self.scan.min_skin_fraction.to_string(),
            "min_neighbors" => self.min_neighbors.to_string(),
            "overlap" => self.overlap.to_string(),
            "svm_threshold" => self.validation.threshold.to_string(),
            "block_weights" => self
                .validation
                .block_weights
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "svm_reg" => self.svm.reg.to_string(),
            "svm_epochs" => self.svm.epochs.to_string(),
            "iou" => self.iou.to_string(),
            _ => return None,
        })
    }

    /// Overlays `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, format!("expected `key = value`, got `{line}`")))?;
            self.set(k.trim(), v).map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text, source)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.preprocess.downscale == 0 {
            return bad("downscale must be >= 1".into());
        }
        SkinThresholds::new(self.skin.cb_min, self.skin.cb_max, self.skin.cr_min, self.skin.cr_max)?;
        if !(self.sobel_threshold >= 0.0 && self.sobel_threshold.is_finite()) {
            return bad(format!("sobel_threshold must be >= 0, got {}", self.sobel_threshold));
        }
        self.cascade.stage.validate()?;
        if self.cascade.stages == 0 {
            return bad("stages must be >= 1".into());
        }
        if self.cascade.base_window < 8 {
            return bad(format!("base_window must be >= 8, got {}", self.cascade.base_window));
        }
        if self.cascade.max_features == Some(0) {
            return bad("max_features must be >= 1".into());
        }
        if !(self.scan.scale_factor > 1.0 && self.scan.scale_factor.is_finite()) {
            return bad(format!("scale_factor must exceed 1, got {}", self.scan.scale_factor));
        }
        if self.scan.step == 0 {
            return bad("step must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.scan.min_skin_fraction) {
            return bad(format!("min_skin_fraction {} not in [0, 1]", self.scan.min_skin_fraction));
        }
        if !(self.overlap > 0.0 && self.overlap < 1.0) {
            return bad(format!("overlap {} not in (0, 1)", self.overlap));
        }
        if !self.validation.threshold.is_finite() {
            return bad("svm_threshold must be finite".into());
        }
        check_block_weights(&self.validation.block_weights)?;
        self.svm.validate()?;
        if !(self.iou > 0.0 && self.iou <= 1.0) {
            return bad(format!("iou {} not in (0, 1]", self.iou));
        }
        Ok(())
    }
}
