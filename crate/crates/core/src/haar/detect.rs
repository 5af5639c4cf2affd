use rayon::prelude::*;

use super::cascade::Cascade;
use super::feature::Integrals;
use crate::image::{integral_image, GrayImage, Variant};
use crate::skin::BinaryMask;
use crate::{Error, Rect, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub rect: Rect,
    pub score: f64,
    /// Window size relative to the base window.
    pub scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanParams {
    pub scale_factor: f64,
    /// Step at the base scale; grows with the window.
    pub step: usize,
    pub min_skin_fraction: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            scale_factor: 1.25,
            step: 2,
            min_skin_fraction: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScanStats {
    /// Every window position visited.
    pub windows_total: usize,
    /// Windows that passed skin gating and reached the cascade.
    pub windows_evaluated: usize,
}

/// Window sizes `round(base * f^k)` that fit the image, without repeats,
/// paired with their steps `max(1, round(step * size / base))`.
pub fn scan_scales(base: usize, width: usize, height: usize, params: &ScanParams) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    let limit = width.min(height);
    let mut k = 0i32;
    loop {
        let size = (base as f64 * params.scale_factor.powi(k)).round() as usize;
        if size > limit {
            break;
        }
        if out.last().is_none_or(|&(s, _)| s != size) {
            let step = ((params.step as f64 * size as f64 / base as f64).round() as usize).max(1);
            out.push((size, step));
        }
        k += 1;
    }
    out
}

/// Sliding-window cascade detection over a scale pyramid of window sizes.
/// With a skin mask, a window is evaluated only if its skin fraction is at
/// least `min_skin_fraction`. Accepted windows are returned in scan order
/// (scale, then row, then column).
pub fn detect_multiscale(
    cascade: &Cascade,
    img: &GrayImage,
    skin: Option<&BinaryMask>,
    params: &ScanParams,
) -> Result<(Vec<Detection>, ScanStats)> {
    if !(params.scale_factor > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "scale factor must exceed 1, got {}",
            params.scale_factor
        )));
    }
    if params.step == 0 {
        return Err(Error::InvalidParameter("step must be >= 1".into()));
    }
    let (w, h) = (img.width(), img.height());
    let gate = match skin {
        Some(mask) => {
            if (mask.width(), mask.height()) != (w, h) {
                return Err(Error::Dimensions(format!(
                    "skin mask {}x{} does not match image {w}x{h}",
                    mask.width(),
                    mask.height()
                )));
            }
            let counts = GrayImage::new(w, h, mask.data().to_vec())?;
            Some(integral_image(&counts, Variant::Upright, false))
        }
        None => None,
    };
    let ii = Integrals::new(img, cascade.uses_tilted());
    let mut detections = Vec::new();
    let mut stats = ScanStats::default();
    for (size, step) in scan_scales(cascade.base_window, w, h, params) {
        let scaled = cascade.scaled(size);
        let scale = size as f64 / cascade.base_window as f64;
        let ys: Vec<usize> = (0..=h - size).step_by(step).collect();
        let rows: Vec<(Vec<Detection>, usize, usize)> = ys
            .par_iter()
            .map(|&y| {
                let mut found = Vec::new();
                let (mut total, mut evaluated) = (0, 0);
                for x in (0..=w - size).step_by(step) {
                    total += 1;
                    let window = Rect::square(x, y, size);
                    if let Some(g) = &gate {
                        let frac = g.sum_unchecked(window) as f64 / window.area() as f64;
                        if frac < params.min_skin_fraction {
                            continue;
                        }
                    }
                    evaluated += 1;
                    let (ok, score) = scaled.classify_at(&ii, x, y);
                    if ok {
                        found.push(Detection { rect: window, score, scale });
                    }
                }
                (found, total, evaluated)
            })
            .collect();
        for (found, total, evaluated) in rows {
            detections.extend(found);
            stats.windows_total += total;
            stats.windows_evaluated += evaluated;
        }
    }
    Ok((detections, stats))
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups detections whose pairwise IoU is at least `overlap` (transitively)
/// and keeps groups of at least `min_neighbors` members. Each group yields
/// the member-average box with the best member score. Groups are ordered by
/// their first member.
pub fn merge_detections(dets: &[Detection], min_neighbors: usize, overlap: f64) -> Result<Vec<Detection>> {
    if !(overlap > 0.0 && overlap < 1.0) {
        return Err(Error::InvalidParameter(format!("overlap {overlap} not in (0, 1)")));
    }
    let n = dets.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if dets[i].rect.iou(&dets[j].rect) >= overlap {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(i),
            None => groups.push((root, vec![i])),
        }
    }
    Ok(groups
        .into_iter()
        .filter(|(_, m)| m.len() >= min_neighbors.max(1))
        .map(|(_, members)| {
            let k = members.len() as f64;
            let avg = |f: fn(&Rect) -> usize| (members.iter().map(|&i| f(&dets[i].rect)).sum::<usize>() as f64 / k).round() as usize;
            let size = (members.iter().map(|&i| (dets[i].rect.w + dets[i].rect.h) as f64 / 2.0).sum::<f64>() / k).round() as usize;
            Detection {
                rect: Rect::square(avg(|r| r.x), avg(|r| r.y), size),
                score: members.iter().map(|&i| dets[i].score).fold(f64::NEG_INFINITY, f64::max),
                scale: members.iter().map(|&i| dets[i].scale).sum::<f64>() / k,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(x: usize, y: usize, s: usize, score: f64) -> Detection {
        Detection {
            rect: Rect::square(x, y, s),
            score,
            scale: 1.0,
        }
    }

    #[test]
    fn scales_and_steps() {
        let p = ScanParams::default();
        let s = scan_scales(24, 70, 50, &p);
        assert_eq!(s, vec![(24, 2), (30, 3), (38, 3), (47, 4)]);
    }

    #[test]
    fn window_count_matches_loop_oracle() {
        let cascade = Cascade::new(24, vec![]);
        let img = GrayImage::filled(97, 61, 100).unwrap();
        let p = ScanParams::default();
        let (dets, stats) = detect_multiscale(&cascade, &img, None, &p).unwrap();
        let mut expect = 0;
        for (size, step) in scan_scales(24, 97, 61, &p) {
            expect += ((97 - size) / step + 1) * ((61 - size) / step + 1);
        }
        assert_eq!(stats.windows_total, expect);
        assert_eq!(stats.windows_evaluated, expect);
        assert_eq!(dets.len(), expect);
    }

    #[test]
    fn zero_skin_gates_everything() {
        let cascade = Cascade::new(24, vec![]);
        let img = GrayImage::filled(60, 40, 100).unwrap();
        let mask = BinaryMask::zeros(60, 40);
        let (dets, stats) = detect_multiscale(&cascade, &img, Some(&mask), &ScanParams::default()).unwrap();
        assert!(dets.is_empty());
        assert_eq!(stats.windows_evaluated, 0);
        assert!(stats.windows_total > 0);
        let ones = BinaryMask::ones(60, 40);
        let gated = detect_multiscale(&cascade, &img, Some(&ones), &ScanParams::default()).unwrap();
        let free = detect_multiscale(&cascade, &img, None, &ScanParams::default()).unwrap();
        assert_eq!(gated, free);
        assert!(detect_multiscale(&cascade, &img, Some(&BinaryMask::zeros(5, 5)), &ScanParams::default()).is_err());
        let bad = ScanParams {
            scale_factor: 1.0,
            ..ScanParams::default()
        };
        assert!(detect_multiscale(&cascade, &img, None, &bad).is_err());
    }

    #[test]
    fn merge_examples() {
        let one = vec![det(3, 4, 24, 1.5)];
        assert_eq!(merge_detections(&one, 1, 0.5).unwrap(), one);
        let two = vec![det(3, 4, 24, 1.0), det(3, 4, 24, 2.0)];
        let m = merge_detections(&two, 2, 0.5).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].rect, Rect::square(3, 4, 24));
        assert_eq!(m[0].score, 2.0);
        assert!(merge_detections(&one, 2, 0.5).unwrap().is_empty());
        assert!(merge_detections(&one, 1, 1.0).is_err());
    }

    #[test]
    fn merge_groups_match_graph_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let mut dets = Vec::new();
            for _ in 0..rng.gen_range(1..5) {
                let (cx, cy) = (rng.gen_range(0..200), rng.gen_range(0..200));
                for _ in 0..rng.gen_range(1..6) {
                    dets.push(det(cx + rng.gen_range(0..8), cy + rng.gen_range(0..8), rng.gen_range(20..30), rng.gen()));
                }
            }
            // components by repeated relaxation over the IoU graph
            let n = dets.len();
            let mut comp: Vec<usize> = (0..n).collect();
            loop {
                let mut changed = false;
                for i in 0..n {
                    for j in 0..n {
                        if dets[i].rect.iou(&dets[j].rect) >= 0.3 && comp[j] < comp[i] {
                            comp[i] = comp[j];
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            let mut ids = comp.clone();
            ids.sort();
            ids.dedup();
            let merged = merge_detections(&dets, 1, 0.3).unwrap();
            assert_eq!(merged.len(), ids.len());
            for (m, id) in merged.iter().zip(&ids) {
                let best = (0..n).filter(|&i| comp[i] == *id).map(|i| dets[i].score).fold(f64::MIN, f64::max);
                assert_eq!(m.score, best);
            }
        }
    }
}
