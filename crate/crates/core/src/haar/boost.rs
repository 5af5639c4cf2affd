//! Decision stumps and discrete Adaboost stage training.

use rayon::prelude::*;

use super::feature::HaarFeature;
use crate::{Error, Result};

/// Smallest weighted error used when computing stump votes.
pub const MIN_ERROR: f64 = 1e-10;

/// Rounds to nine significant digits, the precision of the model files.
pub fn quantize(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float parses")
}

/// Largest nine-significant-digit value not above `v`.
pub fn quantize_down(v: f64) -> f64 {
    let q = quantize(v);
    if q <= v {
        return q;
    }
    let text = format!("{v:.8e}");
    let (mantissa, exp) = text.split_once('e').expect("exponent form");
    let m: f64 = mantissa.parse().expect("mantissa");
    let lowered: f64 = format!("{:.8}e{exp}", m - 1e-8).parse().expect("lowered");
    debug_assert!(lowered <= v);
    lowered
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StumpFit {
    pub threshold: f64,
    pub polarity: i8,
    pub error: f64,
}

/// `h(v) = face` iff `polarity * v < polarity * threshold`.
#[inline]
pub fn stump_predicts_face(value: f64, threshold: f64, polarity: i8) -> bool {
    if polarity >= 0 {
        value < threshold
    } else {
        value > threshold
    }
}

/// Optimal stump by one sorted sweep. Candidate thresholds are one below the
/// smallest value plus every midpoint between consecutive distinct values;
/// ties go to the smaller threshold, then to polarity +1.
pub fn train_stump(values: &[f64], labels: &[bool], weights: &[f64]) -> Result<StumpFit> {
    if values.len() != labels.len() || values.len() != weights.len() {
        return Err(Error::InvalidParameter("stump inputs differ in length".into()));
    }
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::Training("stump needs samples of both labels".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    Ok(sweep(values, labels, weights, &mut order))
}

/// Sweep over pre-allocated buffers; `order` must hold `0..n`.
fn sweep(values: &[f64], labels: &[bool], weights: &[f64], order: &mut [usize]) -> StumpFit {
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let (mut pos_total, mut neg_total) = (0.0, 0.0);
    for (&l, &w) in labels.iter().zip(weights) {
        if l {
            pos_total += w;
        } else {
            neg_total += w;
        }
    }
    let lowest = values[order[0]];
    // Below every value: polarity +1 predicts no faces, -1 predicts all faces.
    let mut best = if pos_total <= neg_total {
        StumpFit {
            threshold: lowest - 1.0,
            polarity: 1,
            error: pos_total,
        }
    } else {
        StumpFit {
            threshold: lowest - 1.0,
            polarity: -1,
            error: neg_total,
        }
    };
    let (mut pos_below, mut neg_below) = (0.0, 0.0);
    for i in 1..order.len() {
        let prev = order[i - 1];
        if labels[prev] {
            pos_below += weights[prev];
        } else {
            neg_below += weights[prev];
        }
        let (a, b) = (values[prev], values[order[i]]);
        if a == b {
            continue;
        }
        let threshold = a + (b - a) / 2.0;
        let err_pos = neg_below + (pos_total - pos_below);
        let err_neg = pos_below + (neg_total - neg_below);
        if err_pos < best.error {
            best = StumpFit {
                threshold,
                polarity: 1,
                error: err_pos,
            };
        }
        if err_neg < best.error {
            best = StumpFit {
                threshold,
                polarity: -1,
                error: err_neg,
            };
        }
    }
    best
}

/// Source of per-sample feature responses for boosting.
pub trait FeatureSource: Sync {
    fn n_features(&self) -> usize;
    fn n_samples(&self) -> usize;
    /// Writes the response of `feature` on every sample into `out`.
    fn values(&self, feature: usize, out: &mut [f64]);
}

/// Dense `features x samples` response matrix.
pub struct DenseSource {
    pub rows: Vec<Vec<f64>>,
}

impl FeatureSource for DenseSource {
    fn n_features(&self) -> usize {
        self.rows.len()
    }

    fn n_samples(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn values(&self, feature: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.rows[feature]);
    }
}

/// Outcome of one boosting round.
#[derive(Clone, Debug)]
pub struct BoostRound {
    pub feature: usize,
    /// Stump threshold, already rounded to file precision.
    pub threshold: f64,
    pub polarity: i8,
    /// Weighted error of the stored stump before reweighting.
    pub error: f64,
    /// Vote weight, rounded to file precision.
    pub alpha: f64,
    /// Stump output per sample (true = face).
    pub predictions: Vec<bool>,
}

/// Lowest-error stump over all features; ties go to the lower feature index.
pub fn best_stump<S: FeatureSource>(source: &S, labels: &[bool], weights: &[f64]) -> Option<(usize, StumpFit)> {
    let n = source.n_samples();
    (0..source.n_features())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], Vec::with_capacity(n)),
            |(vals, order), fi| {
                source.values(fi, vals);
                order.clear();
                order.extend(0..n);
                (fi, sweep(vals, labels, weights, order))
            },
        )
        .reduce_with(|a, b| match a.1.error.total_cmp(&b.1.error).then(a.0.cmp(&b.0)) {
            std::cmp::Ordering::Greater => b,
            _ => a,
        })
}

/// Discrete Adaboost over a feature source. Weights start at `1/(2P)` for
/// positives and `1/(2N)` for negatives.
pub struct Booster<'a, S: FeatureSource> {
    source: &'a S,
    labels: &'a [bool],
    weights: Vec<f64>,
}

impl<'a, S: FeatureSource> Booster<'a, S> {
    pub fn new(source: &'a S, labels: &'a [bool]) -> Result<Self> {
        if labels.len() != source.n_samples() {
            return Err(Error::InvalidParameter("label count differs from sample count".into()));
        }
        let pos = labels.iter().filter(|&&l| l).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::Training("boosting needs positive and negative samples".into()));
        }
        let weights = labels
            .iter()
            .map(|&l| if l { 0.5 / pos as f64 } else { 0.5 / neg as f64 })
            .collect();
        Ok(Booster { source, labels, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Trains one stump and reweights: `w *= exp(-alpha * y * h)`, then
    /// renormalizes. Returns `None` once no stump beats chance.
    pub fn round(&mut self) -> Option<BoostRound> {
        let (feature, fit) = best_stump(self.source, self.labels, &self.weights)?;
        let threshold = quantize(fit.threshold);
        let mut values = vec![0.0; self.source.n_samples()];
        self.source.values(feature, &mut values);
        let predictions: Vec<bool> = values
            .iter()
            .map(|&v| stump_predicts_face(v, threshold, fit.polarity))
            .collect();
        let error: f64 = predictions
            .iter()
            .zip(self.labels)
            .zip(&self.weights)
            .filter(|((p, l), _)| p != l)
            .map(|(_, w)| w)
            .sum();
        if error >= 0.5 {
            return None;
        }
        let eps = error.max(MIN_ERROR);
        let alpha = 0.5 * ((1.0 - eps) / eps).ln();
        let (up, down) = (alpha.exp(), (-alpha).exp());
        for ((w, p), l) in self.weights.iter_mut().zip(&predictions).zip(self.labels) {
            *w *= if p == l { down } else { up };
        }
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
        Some(BoostRound {
            feature,
            threshold,
            polarity: fit.polarity,
            error,
            alpha: quantize(alpha),
            predictions,
        })
    }
}

/// A decision stump over one Haar feature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakClassifier {
    pub feature: HaarFeature,
    pub threshold: f64,
    pub polarity: i8,
}

impl WeakClassifier {
    #[inline]
    pub fn predicts_face(&self, value: f64) -> bool {
        stump_predicts_face(value, self.threshold, self.polarity)
    }
}

/// Boosted stage: passes iff the alpha-weighted face votes reach the threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub stumps: Vec<(WeakClassifier, f64)>,
    pub threshold: f64,
}

impl Stage {
    pub fn alpha_sum(&self) -> f64 {
        self.stumps.iter().map(|(_, a)| a).sum()
    }

    /// Sum of alphas of the stumps voting face, accumulated in stump order.
    pub fn vote(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        let mut s = 0.0;
        for ((weak, alpha), v) in self.stumps.iter().zip(values) {
            if weak.predicts_face(v) {
                s += alpha;
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageParams {
    /// Fraction of positives each stage must pass.
    pub target_dr: f64,
    /// Stage training stops once its false-positive rate is at most this.
    pub max_fpr: f64,
    pub max_stumps: usize,
}

impl Default for StageParams {
    fn default() -> Self {
        StageParams {
            target_dr: 0.99,
            max_fpr: 0.5,
            max_stumps: 20,
        }
    }
}

impl StageParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_dr > 0.0 && self.target_dr <= 1.0) {
            return Err(Error::InvalidParameter(format!("target_dr {} not in (0, 1]", self.target_dr)));
        }
        if !(self.max_fpr > 0.0 && self.max_fpr <= 1.0) {
            return Err(Error::InvalidParameter(format!("max_fpr {} not in (0, 1]", self.max_fpr)));
        }
        if self.max_stumps == 0 {
            return Err(Error::InvalidParameter("max_stumps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Training-set rates achieved by a stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageStats {
    pub detection_rate: f64,
    pub false_positive_rate: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Stage trained by [`train_stage`], with its per-round history.
#[derive(Clone, Debug)]
pub struct TrainedStage {
    /// Stump feature indices refer to the source's feature numbering.
    pub alphas: Vec<(usize, f64, i8, f64)>,
    pub threshold: f64,
    pub stats: StageStats,
    /// Training detection rate after each round.
    pub round_detection_rates: Vec<f64>,
}

/// Number of positives allowed to fail a stage with detection target `dr`.
pub fn allowed_misses(dr: f64, positives: usize) -> usize {
    ((1.0 - dr) * positives as f64 + 1e-9).floor() as usize
}

/// Lowers the stage threshold from `alpha_sum / 2` to the vote of the
/// `allowed_misses + 1`-th lowest positive, if that is lower.
fn stage_threshold(alpha_sum: f64, pos_votes: &[f64], target_dr: f64) -> f64 {
    let mut sorted = pos_votes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = allowed_misses(target_dr, sorted.len()).min(sorted.len() - 1);
    quantize_down((alpha_sum / 2.0).min(sorted[k]))
}

/// Adaboost rounds until the stage false-positive rate drops to `max_fpr`
/// or `max_stumps` stumps are used. Samples flagged `true` are positives.
pub fn train_stage<S: FeatureSource>(source: &S, labels: &[bool], params: &StageParams) -> Result<TrainedStage> {
    params.validate()?;
    let mut booster = Booster::new(source, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    let mut votes = vec![0.0f64; labels.len()];
    let mut alpha_sum = 0.0;
    let mut stumps = Vec::new();
    let mut round_rates = Vec::new();
    let mut threshold = 0.0;
    let mut stats = None;
    while stumps.len() < params.max_stumps {
        let Some(round) = booster.round() else {
            if stumps.is_empty() {
                return Err(Error::Training("no stump beats chance on the first round".into()));
            }
            break;
        };
        for (v, &p) in votes.iter_mut().zip(&round.predictions) {
            if p {
                *v += round.alpha;
            }
        }
        alpha_sum += round.alpha;
        stumps.push((round.feature, round.threshold, round.polarity, round.alpha));
        let pos_votes: Vec<f64> = votes.iter().zip(labels).filter(|(_, &l)| l).map(|(&v, _)| v).collect();
        threshold = stage_threshold(alpha_sum, &pos_votes, params.target_dr);
        let passed_pos = pos_votes.iter().filter(|&&v| v >= threshold).count();
        let passed_neg = votes
            .iter()
            .zip(labels)
            .filter(|(&v, &l)| !l && v >= threshold)
            .count();
        let s = StageStats {
            detection_rate: passed_pos as f64 / n_pos as f64,
            false_positive_rate: passed_neg as f64 / n_neg as f64,
            positives: n_pos,
            negatives: n_neg,
        };
        round_rates.push(s.detection_rate);
        stats = Some(s);
        if s.false_positive_rate <= params.max_fpr {
            break;
        }
    }
    Ok(TrainedStage {
        alphas: stumps,
        threshold,
        stats: stats.expect("at least one round"),
        round_detection_rates: round_rates,
    })
}
