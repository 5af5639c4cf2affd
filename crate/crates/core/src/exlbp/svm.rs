use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::FEATURE_LEN;
use crate::haar::boost::quantize;
use crate::haar::cascade::parse_num;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams {
    /// L2 regularisation strength lambda.
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            reg: 1e-4,
            epochs: 40,
            seed: 0,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg.is_finite() && self.reg > 0.0) {
            return Err(Error::InvalidParameter(format!("svm reg must be > 0, got {}", self.reg)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("svm epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Present after training; the model file does not carry it.
    pub params: Option<SvmParams>,
}

impl LinearSvmModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.len() != FEATURE_LEN {
            return Err(Error::Dimensions(format!(
                "svm needs {FEATURE_LEN} weights, got {}",
                weights.len()
            )));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("svm parameters must be finite".into()));
        }
        Ok(LinearSvmModel {
            weights,
            bias,
            params: None,
        })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("SVM v1 {}\n", self.weights.len());
        for w in &self.weights {
            let _ = writeln!(out, "{w:.8e}");
        }
        let _ = writeln!(out, "BIAS {:.8e}", self.bias);
        out
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, msg: String| Error::parse(source, line, msg);
        let (ln, header) = lines.next().ok_or_else(|| err(1, "empty svm file".into()))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 3 || tok[0] != "SVM" || tok[1] != "v1" {
            return Err(err(ln, format!("expected `SVM v1 {FEATURE_LEN}`, got `{header}`")));
        }
        let n: usize = parse_num(tok[2], ln, source)?;
        if n != FEATURE_LEN {
            return Err(err(ln, format!("expected {FEATURE_LEN} weights, header says {n}")));
        }
        let mut weights = Vec::with_capacity(n);
        let mut last = ln;
        for _ in 0..n {
            let (ln, line) = lines.next().ok_or_else(|| err(last, "missing weight line".into()))?;
            weights.push(parse_num::<f64>(line, ln, source)?);
            last = ln;
        }
        let (ln, line) = lines.next().ok_or_else(|| err(last, "missing BIAS line".into()))?;
        let bias = match line.split_whitespace().collect::<Vec<_>>()[..] {
            ["BIAS", b] => parse_num::<f64>(b, ln, source)?,
            _ => return Err(err(ln, format!("expected `BIAS <b>`, got `{line}`"))),
        };
        if let Some((ln, line)) = lines.next() {
            return Err(err(ln, format!("unexpected trailing content `{line}`")));
        }
        LinearSvmModel::new(weights, bias).map_err(|e| err(ln, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `reg/2 * (|w|^2 + b^2) + mean hinge loss`; the bias is regularised like
/// any other weight because it is trained as a constant feature.
pub fn svm_objective(weights: &[f64], bias: f64, features: &[Vec<f64>], labels: &[i8], reg: f64) -> f64 {
    let norm = dot(weights, weights) + bias * bias;
    let hinge: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| (1.0 - y as f64 * (dot(weights, x) + bias)).max(0.0))
        .sum();
    0.5 * reg * norm + hinge / features.len() as f64
}

/// Pegasos stochastic subgradient descent on the hinge loss. The iterate
/// with the lowest objective over all epochs (starting from zero) is kept.
pub fn train_svm(features: &[Vec<f64>], labels: &[i8], params: &SvmParams) -> Result<LinearSvmModel> {
    params.validate()?;
    if features.len() != labels.len() {
        return Err(Error::Dimensions(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(x) = features.iter().find(|x| x.len() != FEATURE_LEN) {
        return Err(Error::Dimensions(format!("feature length {} != {FEATURE_LEN}", x.len())));
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::InvalidParameter("svm labels must be +1 or -1".into()));
    }
    if !(labels.contains(&1) && labels.contains(&-1)) {
        return Err(Error::Training("svm training needs both classes".into()));
    }

    let reg = params.reg;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut w = vec![0.0; FEATURE_LEN];
    let mut b = 0.0;
    // the weight vector is kept as scale * v so the shrink step is O(1)
    let mut scale = 1.0;
    let mut v = vec![0.0; FEATURE_LEN];
    let mut vb = 0.0;
    let mut best = (svm_objective(&w, b, features, labels, reg), w.clone(), b);
    let mut t = 0usize;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (reg * t as f64);
            let y = labels[i] as f64;
            let margin = y * scale * (dot(&v, &features[i]) + vb);
            if t == 1 {
                // (1 - eta*reg) is zero on the first step
                v.iter_mut().for_each(|e| *e = 0.0);
                vb = 0.0;
                scale = 1.0;
            } else {
                scale *= 1.0 - eta * reg;
            }
            if margin < 1.0 {
                let step = eta * y / scale;
                for (e, x) in v.iter_mut().zip(&features[i]) {
                    *e += step * x;
                }
                vb += step;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|e| *e *= scale);
                vb *= scale;
                scale = 1.0;
            }
        }
        w.iter_mut().zip(&v).for_each(|(e, x)| *e = quantize(scale * x));
        b = quantize(scale * vb);
        let obj = svm_objective(&w, b, features, labels, reg);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }
    let mut model = LinearSvmModel::new(best.1, best.2)?;
    model.params = Some(*params);
    Ok(model)
}
