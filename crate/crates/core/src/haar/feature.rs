use std::fmt;
use std::str::FromStr;

use crate::image::{integral_image, GrayImage, IntegralImage, Variant};
use crate::{Error, Rect, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    /// White left half, black right half.
    Edge2H,
    /// White top half, black bottom half.
    Edge2V,
    /// White-black-white columns.
    Line3H,
    /// White-black-white rows.
    Line3V,
    /// Whole 3x3-unit block minus nine times its center unit.
    CenterSurround,
    /// Two adjacent 45-degree rectangles.
    TiltedEdge2,
    /// Three adjacent 45-degree rectangles, dark middle.
    TiltedLine3,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 7] = [
        FeatureKind::Edge2H,
        FeatureKind::Edge2V,
        FeatureKind::Line3H,
        FeatureKind::Line3V,
        FeatureKind::CenterSurround,
        FeatureKind::TiltedEdge2,
        FeatureKind::TiltedLine3,
    ];

    pub fn is_tilted(self) -> bool {
        matches!(self, FeatureKind::TiltedEdge2 | FeatureKind::TiltedLine3)
    }

    /// Number of units spanned along (w, h).
    fn units(self) -> (usize, usize) {
        match self {
            FeatureKind::Edge2H | FeatureKind::TiltedEdge2 => (2, 1),
            FeatureKind::Edge2V => (1, 2),
            FeatureKind::Line3H | FeatureKind::TiltedLine3 => (3, 1),
            FeatureKind::Line3V => (1, 3),
            FeatureKind::CenterSurround => (3, 3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Edge2H => "edge2h",
            FeatureKind::Edge2V => "edge2v",
            FeatureKind::Line3H => "line3h",
            FeatureKind::Line3V => "line3v",
            FeatureKind::CenterSurround => "center_surround",
            FeatureKind::TiltedEdge2 => "tilted_edge2",
            FeatureKind::TiltedLine3 => "tilted_line3",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown feature kind `{s}`"))
    }
}

/// One weighted rectangle of a feature. Positive weights are white parts,
/// negative weights black parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Part {
    pub rect: Rect,
    pub weight: i64,
}

/// A Haar-like feature placed inside a square base window. `(x, y, w, h)` is
/// the whole footprint; for tilted kinds it is a 45-degree rectangle with top
/// corner `(x, y)`, `w` running to the lower right and `h` to the lower left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HaarFeature {
    pub kind: FeatureKind,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl HaarFeature {
    pub fn new(kind: FeatureKind, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        let (nx, ny) = kind.units();
        if w == 0 || h == 0 || !w.is_multiple_of(nx) || !h.is_multiple_of(ny) {
            return Err(Error::InvalidParameter(format!(
                "{kind} footprint {w}x{h} is not a multiple of its {nx}x{ny} unit grid"
            )));
        }
        Ok(HaarFeature { kind, x, y, w, h })
    }

    /// True when the footprint fits a `size` x `size` window.
    pub fn fits(&self, size: usize) -> bool {
        if self.kind.is_tilted() {
            self.x >= self.h && self.x + self.w <= size && self.y + self.w + self.h <= size
        } else {
            self.x + self.w <= size && self.y + self.h <= size
        }
    }

    /// White/black decomposition. The weighted areas always sum to zero.
    pub fn parts(&self) -> ([Part; 3], usize) {
        let HaarFeature { kind, x, y, w, h } = *self;
        let none = Part {
            rect: Rect::new(0, 0, 0, 0),
            weight: 0,
        };
        let p = |x, y, w, h, weight| Part {
            rect: Rect::new(x, y, w, h),
            weight,
        };
        match kind {
            FeatureKind::Edge2H => {
                let k = w / 2;
                ([p(x, y, k, h, 1), p(x + k, y, k, h, -1), none], 2)
            }
            FeatureKind::Edge2V => {
                let k = h / 2;
                ([p(x, y, w, k, 1), p(x, y + k, w, k, -1), none], 2)
            }
            FeatureKind::Line3H => {
                let k = w / 3;
                ([p(x, y, k, h, 1), p(x + k, y, k, h, -2), p(x + 2 * k, y, k, h, 1)], 3)
            }
            FeatureKind::Line3V => {
                let k = h / 3;
                ([p(x, y, w, k, 1), p(x, y + k, w, k, -2), p(x, y + 2 * k, w, k, 1)], 3)
            }
            FeatureKind::CenterSurround => {
                let (kx, ky) = (w / 3, h / 3);
                ([p(x, y, w, h, 1), p(x + kx, y + ky, kx, ky, -9), none], 2)
            }
            FeatureKind::TiltedEdge2 => {
                let k = w / 2;
                ([p(x, y, k, h, 1), p(x + k, y + k, k, h, -1), none], 2)
            }
            FeatureKind::TiltedLine3 => {
                let k = w / 3;
                (
                    [
                        p(x, y, k, h, 1),
                        p(x + k, y + k, k, h, -2),
                        p(x + 2 * k, y + 2 * k, k, h, 1),
                    ],
                    3,
                )
            }
        }
    }

    /// Geometry for a `size` x `size` window of a feature defined on `base`:
    /// the origin and unit size are rounded, then shrunk until the footprint
    /// fits. `area_ratio` converts responses back to base-window units.
    pub fn scaled(&self, base: usize, size: usize) -> ScaledFeature {
        let s = size as f64 / base as f64;
        let (nx, ny) = self.kind.units();
        let (uw, uh) = (self.w / nx, self.h / ny);
        let round = |v: usize| ((v as f64 * s).round() as usize).max(1);
        let (mut sw, mut sh) = if size == base { (uw, uh) } else { (round(uw), round(uh)) };
        let (x, y) = if size == base {
            (self.x, self.y)
        } else {
            ((self.x as f64 * s).round() as usize, (self.y as f64 * s).round() as usize)
        };
        let feature = if self.kind.is_tilted() {
            while nx * sw + ny * sh > size {
                if sw >= sh && sw > 1 {
                    sw -= 1;
                } else if sh > 1 {
                    sh -= 1;
                } else {
                    break;
                }
            }
            let (fw, fh) = (nx * sw, ny * sh);
            HaarFeature {
                kind: self.kind,
                x: x.clamp(fh, size.saturating_sub(fw).max(fh)),
                y: y.min(size.saturating_sub(fw + fh)),
                w: fw,
                h: fh,
            }
        } else {
            while nx * sw > size && sw > 1 {
                sw -= 1;
            }
            while ny * sh > size && sh > 1 {
                sh -= 1;
            }
            let (fw, fh) = (nx * sw, ny * sh);
            HaarFeature {
                kind: self.kind,
                x: x.min(size.saturating_sub(fw)),
                y: y.min(size.saturating_sub(fh)),
                w: fw,
                h: fh,
            }
        };
        let (parts, len) = feature.parts();
        ScaledFeature {
            parts,
            len,
            tilted: self.kind.is_tilted(),
            area_ratio: (uw * uh) as f64 / (sw * sh) as f64,
        }
    }
}

/// A feature laid out for one window size; part rectangles are relative to
/// the window origin.
#[derive(Clone, Copy, Debug)]
pub struct ScaledFeature {
    parts: [Part; 3],
    len: usize,
    tilted: bool,
    area_ratio: f64,
}

impl ScaledFeature {
    pub fn parts(&self) -> &[Part] {
        &self.parts[..self.len]
    }

    /// Weighted rectangle sum with the window origin at `(ox, oy)`; bounds
    /// must have been checked by the caller.
    #[inline]
    pub(crate) fn raw_value(&self, ii: &Integrals, ox: usize, oy: usize) -> i64 {
        let table = if self.tilted {
            ii.tilted.as_ref().expect("tilted table")
        } else {
            &ii.upright
        };
        let mut v = 0i64;
        for part in &self.parts[..self.len] {
            let r = Rect::new(part.rect.x + ox, part.rect.y + oy, part.rect.w, part.rect.h);
            v += part.weight * table.sum_unchecked(r) as i64;
        }
        v
    }

    /// Response normalized to base-window area and divided by `norm`.
    #[inline]
    pub(crate) fn value(&self, ii: &Integrals, ox: usize, oy: usize, inv_norm: f64) -> f64 {
        let raw = self.raw_value(ii, ox, oy) as f64;
        if self.area_ratio == 1.0 {
            raw * inv_norm
        } else {
            raw * self.area_ratio * inv_norm
        }
    }
}

/// Integral tables needed to evaluate features on one image.
#[derive(Clone, Debug)]
pub struct Integrals {
    /// Upright sums with the squared companion table.
    pub upright: IntegralImage,
    pub tilted: Option<IntegralImage>,
}

impl Integrals {
    pub fn new(img: &GrayImage, with_tilted: bool) -> Self {
        Integrals {
            upright: integral_image(img, Variant::Upright, true),
            tilted: with_tilted.then(|| integral_image(img, Variant::Tilted, false)),
        }
    }

    /// Pixel standard deviation of `window`, floored at 1.
    pub fn window_std(&self, window: Rect) -> f64 {
        let n = window.area() as f64;
        let s = self.upright.sum_unchecked(window) as f64;
        let sq = self.upright.square_sum_unchecked(window) as f64;
        let mean = s / n;
        (sq / n - mean * mean).max(0.0).sqrt().max(1.0)
    }

    pub(crate) fn check_window(&self, window: Rect) -> Result<()> {
        let (w, h) = (self.upright.width(), self.upright.height());
        if window.w == 0 || window.w != window.h || !window.fits(w, h) {
            return Err(Error::OutOfBounds {
                rect: window,
                width: w,
                height: h,
            });
        }
        Ok(())
    }
}

/// All placements of one kind inside a `size` x `size` window, ordered by
/// (y, x, h, w).
pub fn enumerate_kind(kind: FeatureKind, size: usize) -> Vec<HaarFeature> {
    let (nx, ny) = kind.units();
    let mut out = Vec::new();
    for y in 0..size {
        for x in 0..size {
            for h in (ny..=size).step_by(ny) {
                for w in (nx..=size).step_by(nx) {
                    let f = HaarFeature { kind, x, y, w, h };
                    if f.fits(size) {
                        out.push(f);
                    }
                }
            }
        }
    }
    out
}

/// Exhaustive feature bank for a square base window, in canonical order
/// (kind, then y, x, h, w).
pub fn generate_feature_set(base_window: usize) -> Result<Vec<HaarFeature>> {
    if base_window < 8 {
        return Err(Error::InvalidParameter(format!(
            "base window must be at least 8 pixels, got {base_window}"
        )));
    }
    Ok(FeatureKind::ALL
        .into_iter()
        .flat_map(|k| enumerate_kind(k, base_window))
        .collect())
}

/// Feature response `white - black` on `window`, in base-window units. With
/// `variance_norm` the response is divided by the window's pixel standard
/// deviation (floored at 1).
pub fn eval_feature(
    f: &HaarFeature,
    ii: &Integrals,
    window: Rect,
    base_window: usize,
    variance_norm: bool,
) -> Result<f64> {
    ii.check_window(window)?;
    if f.kind.is_tilted() && ii.tilted.is_none() {
        return Err(Error::InvalidParameter(format!(
            "{} feature needs a tilted integral image",
            f.kind
        )));
    }
    if !f.fits(base_window) {
        return Err(Error::InvalidParameter(format!(
            "{f:?} does not fit a {base_window}px base window"
        )));
    }
    let scaled = f.scaled(base_window, window.w);
    let inv = if variance_norm {
        1.0 / ii.window_std(window)
    } else {
        1.0
    };
    Ok(scaled.value(ii, window.x, window.y, inv))
}
