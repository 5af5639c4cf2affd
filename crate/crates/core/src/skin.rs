//! Skin-color search-space reduction: YCbCr chroma thresholding, Sobel edge
//! cuts, binary morphology, connected-component regions, and pixel-level
//! segmentation scoring.

use std::fmt::Write as _;
use std::path::Path;

use crate::image::{pnm, GrayImage, RgbImage, YCbCrImage};
use crate::{Error, Result};

/// Inclusive chroma bounds for skin pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SkinThresholds {
    pub cb_min: u8,
    pub cb_max: u8,
    pub cr_min: u8,
    pub cr_max: u8,
}

impl Default for SkinThresholds {
    fn default() -> Self {
        SkinThresholds {
            cb_min: 77,
            cb_max: 127,
            cr_min: 133,
            cr_max: 173,
        }
    }
}

impl SkinThresholds {
    pub fn new(cb_min: u8, cb_max: u8, cr_min: u8, cr_max: u8) -> Result<Self> {
        if cb_min > cb_max || cr_min > cr_max {
            return Err(Error::InvalidParameter(format!(
                "empty skin interval: Cb [{cb_min},{cb_max}] Cr [{cr_min},{cr_max}]"
            )));
        }
        Ok(SkinThresholds {
            cb_min,
            cb_max,
            cr_min,
            cr_max,
        })
    }

    #[inline]
    pub fn contains(&self, cb: u8, cr: u8) -> bool {
        (self.cb_min..=self.cb_max).contains(&cb) && (self.cr_min..=self.cr_max).contains(&cr)
    }
}

/// Row-major {0,1} mask.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        BinaryMask { width, height, data }
    }

    /// Accepts any byte values and maps non-zero to 1.
    pub fn from_gray(img: &GrayImage) -> Self {
        BinaryMask {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| (v != 0) as u8).collect(),
        }
    }

    /// {0,1} -> {0,255} grayscale for PGM output.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::new(self.width, self.height, self.data.iter().map(|&v| v * 255).collect())
            .expect("mask is non-empty")
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        Ok(BinaryMask::from_gray(&pnm::read_gray(path)?))
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        pnm::write_pgm(path, &self.to_gray())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    fn same_dims(&self, other: &BinaryMask) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Dimensions(format!(
                "mask sizes differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// True when every set pixel of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.len() == other.data.len() && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }
}

pub fn classify_skin(img: &YCbCrImage, t: &SkinThresholds) -> BinaryMask {
    BinaryMask {
        width: img.width(),
        height: img.height(),
        data: img.data().iter().map(|&[_, cb, cr]| t.contains(cb, cr) as u8).collect(),
    }
}

/// Largest attainable Sobel gradient magnitude on 8-bit input, `255 * sqrt(20)`.
pub const SOBEL_MAX_MAGNITUDE: f64 = 1_140.394_668_524_892_7;

/// Pixels whose 3x3 Sobel gradient magnitude exceeds `threshold`; the
/// one-pixel border ring is always 0.
pub fn sobel_edges(img: &GrayImage, threshold: f64) -> Result<BinaryMask> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::Dimensions(format!("sobel needs at least 3x3, got {w}x{h}")));
    }
    let thr2 = threshold * threshold;
    let mut out = BinaryMask::zeros(w, h);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: usize, dy: usize| img.get(x + dx - 1, y + dy - 1) as i32;
            let gx = (p(2, 0) + 2 * p(2, 1) + p(2, 2)) - (p(0, 0) + 2 * p(0, 1) + p(0, 2));
            let gy = (p(0, 2) + 2 * p(1, 2) + p(2, 2)) - (p(0, 0) + 2 * p(1, 0) + p(2, 0));
            let mag2 = (gx * gx + gy * gy) as f64;
            if threshold < 0.0 || mag2 > thr2 {
                out.set(x, y, true);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Morphology {
    Open,
    Close,
}

/// 3x3 erosion/dilation over the in-bounds part of each neighbourhood.
fn morph_pass(mask: &BinaryMask, dilate: bool) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    BinaryMask::from_fn(w, h, |x, y| {
        let ys = y.saturating_sub(1)..=(y + 1).min(h - 1);
        let mut any = false;
        let mut all = true;
        for ny in ys {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let v = mask.get(nx, ny);
                any |= v;
                all &= v;
            }
        }
        if dilate {
            any
        } else {
            all
        }
    })
}

pub fn erode(mask: &BinaryMask) -> BinaryMask {
    morph_pass(mask, false)
}

pub fn dilate(mask: &BinaryMask) -> BinaryMask {
    morph_pass(mask, true)
}

/// Opening or closing with a 3x3 square structuring element.
pub fn morphology(mask: &BinaryMask, op: Morphology) -> BinaryMask {
    match op {
        Morphology::Open => dilate(&erode(mask)),
        Morphology::Close => erode(&dilate(mask)),
    }
}

/// Cuts skin blobs along strong edges, then opens and closes the result.
pub fn refine_mask(skin: &BinaryMask, edges: &BinaryMask) -> Result<BinaryMask> {
    skin.same_dims(edges)?;
    let cut = BinaryMask {
        width: skin.width,
        height: skin.height,
        data: skin.data.iter().zip(&edges.data).map(|(&s, &e)| s & (1 - e)).collect(),
    };
    Ok(morphology(&morphology(&cut, Morphology::Open), Morphology::Close))
}

/// Percentage of pixels classified as skin.
pub fn skin_ratio(mask: &BinaryMask) -> f64 {
    100.0 * mask.count_ones() as f64 / mask.data.len() as f64
}

/// Bounding box of one 8-connected mask component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    /// Pixel count of the component.
    pub area: usize,
    /// `area / (w * h)`.
    pub skin_fraction: f64,
}

impl RegionBox {
    pub fn rect(&self) -> crate::Rect {
        crate::Rect::new(self.x, self.y, self.w, self.h)
    }
}

/// Labels 8-connected components; returns per-pixel labels (0 = background)
/// and the component count.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if mask.data[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask.data[j] != 0 && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Components with at least `min_area` pixels, largest first, ties by (y, x).
pub fn extract_regions(mask: &BinaryMask, min_area: usize) -> Result<Vec<RegionBox>> {
    if min_area == 0 {
        return Err(Error::InvalidParameter("min_area must be >= 1".into()));
    }
    let (labels, n) = label_components(mask);
    // (min_x, min_y, max_x, max_y, count)
    let mut stats = vec![(usize::MAX, usize::MAX, 0usize, 0usize, 0usize); n];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let s = &mut stats[l as usize - 1];
        let (x, y) = (i % mask.width, i / mask.width);
        s.0 = s.0.min(x);
        s.1 = s.1.min(y);
        s.2 = s.2.max(x);
        s.3 = s.3.max(y);
        s.4 += 1;
    }
    let mut regions: Vec<RegionBox> = stats
        .into_iter()
        .filter(|s| s.4 >= min_area)
        .map(|(x0, y0, x1, y1, area)| {
            let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
            RegionBox {
                x: x0,
                y: y0,
                w,
                h,
                area,
                skin_fraction: area as f64 / (w * h) as f64,
            }
        })
        .collect();
    regions.sort_by(|a, b| b.area.cmp(&a.area).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    Ok(regions)
}

/// Default region size floor: 0.1% of the image, at least one pixel.
pub fn default_min_area(width: usize, height: usize) -> usize {
    (width * height / 1000).max(1)
}

/// Pixel confusion counts and derived percentages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentationMetrics {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

impl SegmentationMetrics {
    pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        SegmentationMetrics {
            tp,
            tn,
            fp,
            fn_,
            recall: pct(tp, tp + fn_),
            precision: pct(tp, tp + fp),
            specificity: pct(tn, tn + fp),
            accuracy: pct(tp + tn, tp + tn + fp + fn_),
        }
    }

    /// Pools confusion counts, e.g. over a dataset.
    pub fn merge(&self, other: &SegmentationMetrics) -> Self {
        Self::from_counts(
            self.tp + other.tp,
            self.tn + other.tn,
            self.fp + other.fp,
            self.fn_ + other.fn_,
        )
    }
}

pub fn evaluate_segmentation(pred: &BinaryMask, truth: &BinaryMask) -> Result<SegmentationMetrics> {
    pred.same_dims(truth)?;
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in pred.data.iter().zip(&truth.data) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(SegmentationMetrics::from_counts(tp, tn, fp, fn_))
}

/// Renders a method comparison table: Method | Recall | Precision | Specificity | Accuracy.
pub fn segmentation_table(rows: &[(&str, SegmentationMetrics)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).chain(["Method".len()]).max().unwrap_or(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_w$}  {:>9}  {:>9}  {:>11}  {:>9}",
        "Method", "Recall", "Precision", "Specificity", "Accuracy"
    );
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>9}  {:>9}  {:>11}  {:>9}",
            name,
            format!("{:.2}%", m.recall),
            format!("{:.2}%", m.precision),
            format!("{:.2}%", m.specificity),
            format!("{:.2}%", m.accuracy)
        );
    }
    out
}

/// Fixed RGB skin rule for uniform daylight illumination (Kovac et al.).
pub fn rgb_rule_skin(img: &RgbImage) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| {
        let [r, g, b] = img.get(x, y).map(i32::from);
        let mx = r.max(g).max(b);
        let mn = r.min(g).min(b);
        r > 95 && g > 40 && b > 20 && mx - mn > 15 && (r - g).abs() > 15 && r > g && r > b
    })
}

/// Fixed HSV skin rule: hue in [0, 50] degrees, saturation in [0.23, 0.68].
pub fn hsv_rule_skin(img: &RgbImage) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| {
        let [r, g, b] = img.get(x, y).map(|v| v as f64 / 255.0);
        let mx = r.max(g).max(b);
        let mn = r.min(g).min(b);
        if mx <= 0.0 || mx == mn {
            return false;
        }
        let d = mx - mn;
        let s = d / mx;
        let mut hue = if mx == r {
            60.0 * ((g - b) / d)
        } else if mx == g {
            60.0 * ((b - r) / d + 2.0)
        } else {
            60.0 * ((r - g) / d + 4.0)
        };
        if hue < 0.0 {
            hue += 360.0;
        }
        (0.0..=50.0).contains(&hue) && (0.23..=0.68).contains(&s)
    })
}
