//! Attentional cascade: stage-wise training with negative bootstrapping,
//! window classification, and the line-oriented model format.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::boost::{train_stage, FeatureSource, Stage, StageParams, StageStats, WeakClassifier};
use super::feature::{generate_feature_set, HaarFeature, Integrals, ScaledFeature};
use crate::image::{resize_bilinear, GrayImage};
use crate::{Error, Rect, Result};

/// Default square training window.
pub const DEFAULT_BASE_WINDOW: usize = 24;

/// Ordered boosted stages; a window is a face iff it passes all of them.
/// Feature responses are always variance-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Cascade {
    pub base_window: usize,
    pub stages: Vec<Stage>,
    /// Per-stage training rates. Empty for cascades loaded from a file, since
    /// the model format does not carry them.
    pub metadata: Vec<StageStats>,
}

/// One stump laid out for a particular window size.
#[derive(Clone, Debug)]
struct ScaledStump {
    feature: ScaledFeature,
    threshold: f64,
    polarity: i8,
    alpha: f64,
}

/// A cascade with every feature pre-scaled to one window size.
#[derive(Clone, Debug)]
pub struct ScaledCascade {
    size: usize,
    stages: Vec<(Vec<ScaledStump>, f64)>,
}

impl ScaledCascade {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Evaluates stages in order, stopping at the first failure. Returns the
    /// acceptance flag and the margin of the last evaluated stage. The window
    /// must lie inside the integral tables.
    pub fn classify_at(&self, ii: &Integrals, x: usize, y: usize) -> (bool, f64) {
        let inv = 1.0 / ii.window_std(Rect::square(x, y, self.size));
        let mut margin = 0.0;
        for (stumps, threshold) in &self.stages {
            let mut vote = 0.0;
            for s in stumps {
                let v = s.feature.value(ii, x, y, inv);
                if super::boost::stump_predicts_face(v, s.threshold, s.polarity) {
                    vote += s.alpha;
                }
            }
            margin = vote - threshold;
            if vote < *threshold {
                return (false, margin);
            }
        }
        (true, margin)
    }

    /// Margins of every stage, without early exit.
    pub fn stage_margins(&self, ii: &Integrals, x: usize, y: usize) -> Vec<f64> {
        let inv = 1.0 / ii.window_std(Rect::square(x, y, self.size));
        self.stages
            .iter()
            .map(|(stumps, threshold)| {
                let mut vote = 0.0;
                for s in stumps {
                    if super::boost::stump_predicts_face(s.feature.value(ii, x, y, inv), s.threshold, s.polarity) {
                        vote += s.alpha;
                    }
                }
                vote - threshold
            })
            .collect()
    }
}

impl Cascade {
    pub fn new(base_window: usize, stages: Vec<Stage>) -> Self {
        Cascade {
            base_window,
            stages,
            metadata: Vec::new(),
        }
    }

    pub fn uses_tilted(&self) -> bool {
        self.stages
            .iter()
            .flat_map(|s| &s.stumps)
            .any(|(w, _)| w.feature.kind.is_tilted())
    }

    pub fn scaled(&self, size: usize) -> ScaledCascade {
        ScaledCascade {
            size,
            stages: self
                .stages
                .iter()
                .map(|stage| {
                    let stumps = stage
                        .stumps
                        .iter()
                        .map(|(weak, alpha)| ScaledStump {
                            feature: weak.feature.scaled(self.base_window, size),
                            threshold: weak.threshold,
                            polarity: weak.polarity,
                            alpha: *alpha,
                        })
                        .collect();
                    (stumps, stage.threshold)
                })
                .collect(),
        }
    }

    /// Classifies one square window. The score is the final-stage margin when
    /// accepted, else the margin of the stage that rejected.
    pub fn classify_window(&self, ii: &Integrals, window: Rect) -> Result<(bool, f64)> {
        ii.check_window(window)?;
        if window.w < self.base_window {
            return Err(Error::InvalidParameter(format!(
                "window {} smaller than base window {}",
                window.w, self.base_window
            )));
        }
        if self.uses_tilted() && ii.tilted.is_none() {
            return Err(Error::InvalidParameter("cascade needs tilted integral image".into()));
        }
        Ok(self.scaled(window.w).classify_at(ii, window.x, window.y))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "CASCADE v1 {} {}", self.base_window, self.stages.len());
        for stage in &self.stages {
            let _ = writeln!(out, "STAGE {} {:.8e}", stage.stumps.len(), stage.threshold);
            for (w, alpha) in &stage.stumps {
                let f = &w.feature;
                let _ = writeln!(
                    out,
                    "STUMP {} {} {} {} {} {:.8e} {} {:.8e}",
                    f.kind, f.x, f.y, f.w, f.h, w.threshold, w.polarity, alpha
                );
            }
        }
        out
    }

    pub fn parse(text: &str, source: &str) -> Result<Cascade> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, msg: String| Error::parse(source, line, msg);
        let (ln, header) = lines.next().ok_or_else(|| err(1, "empty cascade file".into()))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 4 || tok[0] != "CASCADE" || tok[1] != "v1" {
            return Err(err(ln, format!("expected `CASCADE v1 <window> <stages>`, got `{header}`")));
        }
        let base_window: usize = parse_num(tok[2], ln, source)?;
        let n_stages: usize = parse_num(tok[3], ln, source)?;
        let mut stages = Vec::with_capacity(n_stages);
        for _ in 0..n_stages {
            let (ln, line) = lines.next().ok_or_else(|| err(ln, "missing STAGE line".into()))?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 3 || tok[0] != "STAGE" {
                return Err(err(ln, format!("expected `STAGE <n> <threshold>`, got `{line}`")));
            }
            let n: usize = parse_num(tok[1], ln, source)?;
            let threshold: f64 = parse_num(tok[2], ln, source)?;
            let mut stumps = Vec::with_capacity(n);
            for _ in 0..n {
                let (ln, line) = lines.next().ok_or_else(|| err(ln, "missing STUMP line".into()))?;
                let tok: Vec<&str> = line.split_whitespace().collect();
                if tok.len() != 9 || tok[0] != "STUMP" {
                    return Err(err(ln, format!("expected 9-field STUMP line, got `{line}`")));
                }
                let kind = tok[1].parse().map_err(|e: String| err(ln, e))?;
                let geom: Vec<usize> = tok[2..6]
                    .iter()
                    .map(|t| parse_num(t, ln, source))
                    .collect::<Result<_>>()?;
                let feature =
                    HaarFeature::new(kind, geom[0], geom[1], geom[2], geom[3]).map_err(|e| err(ln, e.to_string()))?;
                if !feature.fits(base_window) {
                    return Err(err(ln, format!("feature does not fit the {base_window}px window")));
                }
                let threshold: f64 = parse_num(tok[6], ln, source)?;
                let polarity: i8 = parse_num(tok[7], ln, source)?;
                if polarity != 1 && polarity != -1 {
                    return Err(err(ln, format!("polarity must be 1 or -1, got {polarity}")));
                }
                let alpha: f64 = parse_num(tok[8], ln, source)?;
                if !alpha.is_finite() || alpha < 0.0 {
                    return Err(err(ln, format!("alpha must be finite and non-negative, got {alpha}")));
                }
                stumps.push((
                    WeakClassifier {
                        feature,
                        threshold,
                        polarity,
                    },
                    alpha,
                ));
            }
            stages.push(Stage { stumps, threshold });
        }
        if let Some((ln, line)) = lines.next() {
            return Err(err(ln, format!("unexpected trailing content `{line}`")));
        }
        Ok(Cascade::new(base_window, stages))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Cascade> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Cascade::parse(&text, &path.display().to_string())
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, source: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(source, line, format!("invalid number `{tok}`")))
}

/// Integral tables and normalization for one base-window training patch.
pub struct TrainingSample {
    integrals: Integrals,
    inv_std: f64,
}

impl TrainingSample {
    pub fn new(img: &GrayImage) -> Self {
        let integrals = Integrals::new(img, true);
        let inv_std = 1.0 / integrals.window_std(Rect::square(0, 0, img.width()));
        TrainingSample { integrals, inv_std }
    }
}

/// Responses of a feature bank on a set of base-window samples.
pub struct HaarSource<'a> {
    pub features: &'a [HaarFeature],
    pub samples: Vec<&'a TrainingSample>,
    pub base_window: usize,
}

impl FeatureSource for HaarSource<'_> {
    fn n_features(&self) -> usize {
        self.features.len()
    }

    fn n_samples(&self) -> usize {
        self.samples.len()
    }

    fn values(&self, feature: usize, out: &mut [f64]) {
        let f = self.features[feature].scaled(self.base_window, self.base_window);
        for (o, s) in out.iter_mut().zip(&self.samples) {
            *o = f.value(&s.integrals, 0, 0, s.inv_std);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeParams {
    pub base_window: usize,
    pub stages: usize,
    pub stage: StageParams,
    /// Uniformly subsample the feature bank to this many features.
    pub max_features: Option<usize>,
    pub seed: u64,
    /// Mining gives up after this many window draws per missing negative.
    pub mining_attempts: usize,
}

impl Default for CascadeParams {
    fn default() -> Self {
        CascadeParams {
            base_window: DEFAULT_BASE_WINDOW,
            stages: 15,
            stage: StageParams::default(),
            max_features: None,
            seed: 0,
            mining_attempts: 2000,
        }
    }
}

/// Selected feature bank for a training run.
pub fn training_features(params: &CascadeParams) -> Result<Vec<HaarFeature>> {
    let bank = generate_feature_set(params.base_window)?;
    Ok(match params.max_features {
        Some(k) if k < bank.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x6a09_e667_f3bc_c908);
            let mut picked = index::sample(&mut rng, bank.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| bank[i]).collect()
        }
        _ => bank,
    })
}

fn stage_passes(stage: &Stage, base: usize, s: &TrainingSample) -> bool {
    let votes = stage
        .stumps
        .iter()
        .map(|(w, _)| w.feature.scaled(base, base).value(&s.integrals, 0, 0, s.inv_std));
    stage.vote(votes) >= stage.threshold
}

/// Background pyramid from which false positives are mined.
struct MiningPool {
    levels: Vec<(GrayImage, Integrals)>,
}

impl MiningPool {
    fn new(images: &[GrayImage], base: usize) -> Self {
        let mut levels = Vec::new();
        for img in images {
            let (mut w, mut h) = (img.width() as f64, img.height() as f64);
            while w.round() as usize >= base && h.round() as usize >= base {
                let level = resize_bilinear(img, w.round() as usize, h.round() as usize).expect("non-empty level");
                let ii = Integrals::new(&level, true);
                levels.push((level, ii));
                w /= 1.25;
                h /= 1.25;
            }
        }
        MiningPool { levels }
    }

    /// Draws random base-window crops until `want` pass `cascade` or the
    /// attempt budget runs out.
    fn mine(&self, cascade: &ScaledCascade, want: usize, attempts: usize, rng: &mut ChaCha8Rng) -> Vec<GrayImage> {
        let base = cascade.size();
        let mut found = Vec::new();
        if self.levels.is_empty() {
            return found;
        }
        for _ in 0..attempts {
            if found.len() >= want {
                break;
            }
            let (img, ii) = &self.levels[rng.gen_range(0..self.levels.len())];
            let x = rng.gen_range(0..=img.width() - base);
            let y = rng.gen_range(0..=img.height() - base);
            if cascade.classify_at(ii, x, y).0 {
                found.push(img.crop(Rect::square(x, y, base)).expect("crop inside level"));
            }
        }
        found
    }
}

/// Trains stages in sequence. After each stage, rejected negatives are
/// dropped and, when a background pool is given, replaced by windows the
/// cascade so far still accepts. Positives rejected by a stage are dropped
/// too. Training stops early once no negatives remain.
pub fn train_cascade(
    positives: &[GrayImage],
    negatives: &[GrayImage],
    pool: Option<&[GrayImage]>,
    params: &CascadeParams,
) -> Result<Cascade> {
    train_cascade_with(positives, negatives, pool, params, |_, _| {})
}

/// [`train_cascade`] with a callback invoked after each stage.
pub fn train_cascade_with(
    positives: &[GrayImage],
    negatives: &[GrayImage],
    pool: Option<&[GrayImage]>,
    params: &CascadeParams,
    mut on_stage: impl FnMut(usize, &StageStats),
) -> Result<Cascade> {
    params.stage.validate()?;
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Training("training needs positive and negative samples".into()));
    }
    let base = params.base_window;
    for img in positives.iter().chain(negatives) {
        if img.width() != base || img.height() != base {
            return Err(Error::Dimensions(format!(
                "training sample is {}x{}, expected {base}x{base}",
                img.width(),
                img.height()
            )));
        }
    }
    let features = training_features(params)?;
    let mut pos: Vec<TrainingSample> = positives.iter().map(TrainingSample::new).collect();
    let mut neg: Vec<TrainingSample> = negatives.iter().map(TrainingSample::new).collect();
    let target_neg = neg.len();
    let pool = pool.map(|p| MiningPool::new(p, base));
    let mut cascade = Cascade::new(base, Vec::new());

    for stage_index in 0..params.stages {
        if neg.is_empty() || pos.is_empty() {
            break;
        }
        let mut samples: Vec<&TrainingSample> = pos.iter().collect();
        samples.extend(neg.iter());
        let labels: Vec<bool> = (0..samples.len()).map(|i| i < pos.len()).collect();
        let source = HaarSource {
            features: &features,
            samples,
            base_window: base,
        };
        let trained = match train_stage(&source, &labels, &params.stage) {
            Ok(t) => t,
            Err(e) if stage_index == 0 => return Err(e),
            Err(_) => break,
        };
        let stage = Stage {
            stumps: trained
                .alphas
                .iter()
                .map(|&(fi, threshold, polarity, alpha)| {
                    (
                        WeakClassifier {
                            feature: features[fi],
                            threshold,
                            polarity,
                        },
                        alpha,
                    )
                })
                .collect(),
            threshold: trained.threshold,
        };
        pos.retain(|s| stage_passes(&stage, base, s));
        neg.retain(|s| stage_passes(&stage, base, s));
        cascade.stages.push(stage);
        cascade.metadata.push(trained.stats);
        on_stage(stage_index, &trained.stats);

        if let Some(pool) = &pool {
            let missing = target_neg.saturating_sub(neg.len());
            if missing > 0 && stage_index + 1 < params.stages {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(stage_index as u64 + 1));
                let scaled = cascade.scaled(base);
                let mined = pool.mine(&scaled, missing, missing * params.mining_attempts, &mut rng);
                neg.extend(mined.iter().map(TrainingSample::new));
            }
        }
    }
    Ok(cascade)
}
