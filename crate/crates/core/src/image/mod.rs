//! Raster containers, color conversion, preprocessing filters, integral
//! images and Netpbm I/O.

mod filters;
pub(crate) mod integral;
pub mod pnm;

pub use filters::{downscale, histogram_equalization, median_filter, resize_bilinear};
pub use integral::{integral_image, IntegralImage, Variant};

use crate::{Error, Rect, Result};

/// 8-bit single channel image, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(GrayImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        check_dims(width, height, width * height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(GrayImage { width, height, data })
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

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn crop(&self, rect: Rect) -> Result<GrayImage> {
        if rect.w == 0 || rect.h == 0 || !rect.fits(self.width, self.height) {
            return Err(Error::OutOfBounds {
                rect,
                width: self.width,
                height: self.height,
            });
        }
        GrayImage::from_fn(rect.w, rect.h, |x, y| self.get(rect.x + x, rect.y + y))
    }
}

/// 8-bit RGB image, row-major triples.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(RgbImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        check_dims(width, height, width * height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        RgbImage {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[u8; 3]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    pub fn put(&mut self, x: usize, y: usize, px: [u8; 3]) {
        self.data[y * self.width + x] = px;
    }

    /// Nearest-sample decimation keeping rows/columns 0, M, 2M, ...
    pub fn downscale(&self, factor: usize) -> Result<RgbImage> {
        let (w, h) = downscaled_dims(self.width, self.height, factor)?;
        RgbImage::from_fn(w, h, |x, y| self.get(x * factor, y * factor))
    }

    /// Draws a 1-px rectangle outline, clipped to the image.
    pub fn draw_rect(&mut self, rect: Rect, color: [u8; 3]) {
        if rect.w == 0 || rect.h == 0 {
            return;
        }
        let x1 = (rect.right() - 1).min(self.width - 1);
        let y1 = (rect.bottom() - 1).min(self.height - 1);
        if rect.x >= self.width || rect.y >= self.height {
            return;
        }
        for x in rect.x..=x1 {
            self.put(x, rect.y, color);
            self.put(x, y1, color);
        }
        for y in rect.y..=y1 {
            self.put(rect.x, y, color);
            self.put(x1, y, color);
        }
    }
}

/// Full-range YCbCr image; channels stored as `[Y, Cb, Cr]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YCbCrImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl YCbCrImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[u8; 3]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimensions(format!("{width}x{height} image is empty")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::Dimensions(format!(
            "{width}x{height} image needs {} pixels, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

pub(crate) fn downscaled_dims(width: usize, height: usize, factor: usize) -> Result<(usize, usize)> {
    if factor == 0 {
        return Err(Error::InvalidParameter("downscale factor must be >= 1".into()));
    }
    if width / factor == 0 || height / factor == 0 {
        return Err(Error::InvalidParameter(format!(
            "downscale factor {factor} leaves nothing of a {width}x{height} image"
        )));
    }
    Ok((width.div_ceil(factor), height.div_ceil(factor)))
}

#[inline]
fn clamp_round(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[inline]
fn luma(px: [u8; 3]) -> f64 {
    0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
}

/// BT.601 luma, rounded.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&px| clamp_round(luma(px))).collect(),
    }
}

/// Full-range BT.601 RGB to YCbCr.
pub fn rgb_to_ycbcr(img: &RgbImage) -> YCbCrImage {
    let data = img
        .data
        .iter()
        .map(|&[r, g, b]| {
            let (r, g, b) = (r as f64, g as f64, b as f64);
            let y = 0.299 * r + 0.587 * g + 0.114 * b;
            let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
            let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
            [clamp_round(y), clamp_round(cb), clamp_round(cr)]
        })
        .collect();
    YCbCrImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Inverse of [`rgb_to_ycbcr`], up to rounding.
pub fn ycbcr_to_rgb(img: &YCbCrImage) -> RgbImage {
    let data = img
        .data
        .iter()
        .map(|&[y, cb, cr]| {
            let (y, cb, cr) = (y as f64, cb as f64 - 128.0, cr as f64 - 128.0);
            [
                clamp_round(y + 1.402 * cr),
                clamp_round(y - 0.344136 * cb - 0.714136 * cr),
                clamp_round(y + 1.772 * cb),
            ]
        })
        .collect();
    RgbImage {
        width: img.width,
        height: img.height,
        data,
    }
}
