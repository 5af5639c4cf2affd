//! Dataset manifests, detection matching and the accuracy reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::haar::Detection;
use crate::haar::cascade::parse_num;
use crate::{Error, Rect, Result};

pub const DEFAULT_IOU: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub faces: Vec<Rect>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn face_count(&self) -> usize {
        self.entries.iter().map(|e| e.faces.len()).sum()
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Relative paths are taken relative to `base`.
fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// `<path> <n> <x y w h> x n` per line.
pub fn parse_manifest(text: &str, source: &str, base: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for (ln, line) in content_lines(text) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 2 {
            return Err(Error::parse(source, ln, "expected `<path> <count> <x y w h>...`"));
        }
        let n: usize = parse_num(tok[1], ln, source)?;
        if tok.len() != 2 + 4 * n {
            return Err(Error::parse(
                source,
                ln,
                format!("count {n} needs {} box values, found {}", 4 * n, tok.len() - 2),
            ));
        }
        let mut faces = Vec::with_capacity(n);
        for b in tok[2..].chunks(4) {
            let v: Vec<usize> = b.iter().map(|t| parse_num(t, ln, source)).collect::<Result<_>>()?;
            if v[2] == 0 || v[3] == 0 {
                return Err(Error::parse(source, ln, "face boxes need positive width and height"));
            }
            faces.push(Rect::new(v[0], v[1], v[2], v[3]));
        }
        entries.push(ManifestEntry {
            path: resolve(base, tok[0]),
            faces,
        });
    }
    Ok(DatasetManifest { entries })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string(), path.parent().unwrap_or(Path::new("")))
}

/// `<path> <maskpath>` per line.
pub fn parse_skin_manifest(text: &str, source: &str, base: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    content_lines(text)
        .map(|(ln, line)| match line.split_whitespace().collect::<Vec<_>>()[..] {
            [img, mask] => Ok((resolve(base, img), resolve(base, mask))),
            _ => Err(Error::parse(source, ln, "expected `<path> <maskpath>`")),
        })
        .collect()
}

pub fn load_skin_manifest(path: impl AsRef<Path>) -> Result<Vec<(PathBuf, PathBuf)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_skin_manifest(&text, &path.display().to_string(), path.parent().unwrap_or(Path::new("")))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub hits: usize,
    pub misses: usize,
    pub false_positives: usize,
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;
    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            hits: self.hits + o.hits,
            misses: self.misses + o.misses,
            false_positives: self.false_positives + o.false_positives,
        }
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> MatchCounts {
        iter.fold(MatchCounts::default(), |a, b| a + b)
    }
}

fn check_iou(iou_min: f64) -> Result<()> {
    if !(iou_min > 0.0 && iou_min <= 1.0) {
        return Err(Error::InvalidParameter(format!("iou_min must be in (0, 1], got {iou_min}")));
    }
    Ok(())
}

/// Greedy one-to-one matching. Detections are taken by descending score,
/// ties broken by box geometry so the input order never matters; each takes
/// the unmatched truth box it overlaps most, if that overlap reaches
/// `iou_min`.
pub fn match_detections(dets: &[Detection], truth: &[Rect], iou_min: f64) -> Result<MatchCounts> {
    check_iou(iou_min)?;
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.rect.cmp(&b.rect)));
    let mut taken = vec![false; truth.len()];
    let mut hits = 0;
    for d in order {
        let best = truth
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken[*i])
            .map(|(i, t)| (i, d.rect.iou(t)))
            .filter(|&(_, iou)| iou >= iou_min)
            .fold(None, |best: Option<(usize, f64)>, c| match best {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            });
        if let Some((i, _)) = best {
            taken[i] = true;
            hits += 1;
        }
    }
    Ok(MatchCounts {
        hits,
        misses: truth.len() - hits,
        false_positives: dets.len() - hits,
    })
}

/// Per-image matching summed over a corpus.
pub fn match_corpus(images: &[(Vec<Detection>, Vec<Rect>)], iou_min: f64) -> Result<MatchCounts> {
    check_iou(iou_min)?;
    images
        .par_iter()
        .map(|(d, t)| match_detections(d, t, iou_min))
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().sum())
}

/// Percentage of faces found.
pub fn detection_rate(hits: usize, misses: usize) -> Result<f64> {
    if hits + misses == 0 {
        return Err(Error::InvalidParameter("detection rate of zero faces".into()));
    }
    Ok(100.0 * hits as f64 / (hits + misses) as f64)
}

pub fn false_alarm_rate(false_windows: usize, total_windows: usize) -> Result<f64> {
    if total_windows == 0 {
        return Err(Error::InvalidParameter("false alarm rate over zero windows".into()));
    }
    Ok(false_windows as f64 / total_windows as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionReport {
    pub hits: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub detection_rate: f64,
    /// False detections per scanned window; `None` when nothing was scanned.
    pub gamma_fa: Option<f64>,
    pub total_windows: usize,
}

impl DetectionReport {
    pub fn new(counts: MatchCounts, total_windows: usize) -> Result<Self> {
        Ok(DetectionReport {
            hits: counts.hits,
            misses: counts.misses,
            false_positives: counts.false_positives,
            detection_rate: detection_rate(counts.hits, counts.misses)?,
            gamma_fa: false_alarm_rate(counts.false_positives, total_windows).ok(),
            total_windows,
        })
    }

    pub fn row(&self, method: &str) -> ReportRow {
        ReportRow {
            method: method.to_string(),
            hits: self.hits,
            misses: self.misses,
            false_positives: self.false_positives,
            detection_rate: self.detection_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fp_per_image: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,tpr,fp_per_image\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.tpr, p.fp_per_image);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Every distinct score, plus one value below and one above them all, so a
/// sweep spans the unfiltered and the empty operating points.
pub fn score_thresholds(images: &[(Vec<Detection>, Vec<Rect>)]) -> Vec<f64> {
    let mut scores: Vec<f64> = images
        .iter()
        .flat_map(|(d, _)| d.iter().map(|d| d.score))
        .filter(|s| s.is_finite())
        .collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    match (scores.first().copied(), scores.last().copied()) {
        (Some(lo), Some(hi)) => {
            let mut out = vec![lo - 1.0];
            out.extend(scores);
            out.push(hi + 1.0);
            out
        }
        _ => vec![0.0],
    }
}

/// Re-matches every image keeping only detections scoring at least each
/// threshold.
pub fn roc_sweep(images: &[(Vec<Detection>, Vec<Rect>)], thresholds: &[f64], iou_min: f64) -> Result<RocCurve> {
    check_iou(iou_min)?;
    if thresholds.iter().any(|t| t.is_nan()) || thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("roc thresholds must be sorted ascending".into()));
    }
    let mut ts = thresholds.to_vec();
    ts.dedup();
    let faces: usize = images.iter().map(|(_, t)| t.len()).sum();
    let n_images = images.len().max(1) as f64;
    let points = ts
        .par_iter()
        .map(|&t| {
            let filtered: Vec<(Vec<Detection>, Vec<Rect>)> = images
                .iter()
                .map(|(d, truth)| (d.iter().filter(|d| d.score >= t).copied().collect(), truth.clone()))
                .collect();
            let c: MatchCounts = filtered
                .iter()
                .map(|(d, truth)| match_detections(d, truth, iou_min))
                .sum::<Result<MatchCounts>>()?;
            Ok(RocPoint {
                threshold: t,
                tpr: if faces == 0 { 0.0 } else { c.hits as f64 / faces as f64 },
                fp_per_image: c.false_positives as f64 / n_images,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve { points })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub hits: usize,
    pub misses: usize,
    pub false_positives: usize,
    /// Percent, printed rounded in the table and exact in CSV.
    pub detection_rate: f64,
}

const HEADER: [&str; 5] = ["Method", "Hits", "Misses", "False positives", "Detection rate (%)"];

/// Aligned text table, one line per row after the header.
pub fn emit_report(rows: &[ReportRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("report needs at least one row".into()));
    }
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                r.hits.to_string(),
                r.misses.to_string(),
                r.false_positives.to_string(),
                format!("{}", r.detection_rate.round() as i64),
            ]
        })
        .collect();
    let mut widths = HEADER.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cols: [&str; 5]| {
        let mut l = format!("{:<w$}", cols[0], w = widths[0]);
        for (c, w) in cols[1..].iter().zip(&widths[1..]) {
            let _ = write!(l, "  {c:>w$}");
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(HEADER);
    for row in &cells {
        line([&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    Ok(out)
}

pub fn emit_report_csv(rows: &[ReportRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("report needs at least one row".into()));
    }
    let mut out = String::from("method,hits,misses,false_positives,detection_rate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.method, r.hits, r.misses, r.false_positives, r.detection_rate
        );
    }
    Ok(out)
}
