use super::{downscaled_dims, GrayImage};
use crate::{Error, Result};

/// Keeps rows and columns 0, M, 2M, ... of the input.
pub fn downscale(img: &GrayImage, factor: usize) -> Result<GrayImage> {
    let (w, h) = downscaled_dims(img.width(), img.height(), factor)?;
    GrayImage::from_fn(w, h, |x, y| img.get(x * factor, y * factor))
}

/// Median over the `(2r+1)^2` window, replicating edge pixels.
pub fn median_filter(img: &GrayImage, radius: usize) -> Result<GrayImage> {
    if radius == 0 {
        return Err(Error::InvalidParameter("median radius must be >= 1".into()));
    }
    let (w, h) = (img.width(), img.height());
    let r = radius as isize;
    let side = 2 * radius + 1;
    let mut window = Vec::with_capacity(side * side);
    GrayImage::from_fn(w, h, |x, y| {
        window.clear();
        for dy in -r..=r {
            let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
            for dx in -r..=r {
                let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                window.push(img.get(sx, sy));
            }
        }
        let mid = window.len() / 2;
        *window.select_nth_unstable(mid).1
    })
}

/// Cumulative-histogram remap normalized by the smallest non-zero cdf value.
/// A constant image maps to all zeros.
pub fn histogram_equalization(img: &GrayImage) -> GrayImage {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (c, &n) in cdf.iter_mut().zip(hist.iter()) {
        acc += n;
        *c = acc;
    }
    let total = acc;
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let denom = total - cdf_min;
    let mut lut = [0u8; 256];
    if denom > 0 {
        for (v, slot) in lut.iter_mut().enumerate() {
            let num = cdf[v].saturating_sub(cdf_min);
            *slot = (num as f64 / denom as f64 * 255.0).round() as u8;
        }
    }
    GrayImage::new(
        img.width(),
        img.height(),
        img.data().iter().map(|&v| lut[v as usize]).collect(),
    )
    .expect("dimensions unchanged")
}

/// Bilinear resample with corner-aligned sampling grids, so the corner
/// pixels of the output sample the corner pixels of the input exactly.
pub fn resize_bilinear(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::Dimensions(format!("cannot resize to {width}x{height}")));
    }
    let (sw, sh) = (img.width(), img.height());
    if sw == width && sh == height {
        return Ok(img.clone());
    }
    let axis = |dst: usize, src: usize| -> Vec<(usize, usize, f64)> {
        (0..dst)
            .map(|d| {
                let pos = if dst == 1 {
                    (src - 1) as f64 / 2.0
                } else {
                    d as f64 * (src - 1) as f64 / (dst - 1) as f64
                };
                let i0 = (pos.floor() as usize).min(src - 1);
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let xs = axis(width, sw);
    let ys = axis(height, sh);
    GrayImage::from_fn(width, height, |x, y| {
        let (x0, x1, fx) = xs[x];
        let (y0, y1, fy) = ys[y];
        let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
        let bot = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
        (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
    })
}
