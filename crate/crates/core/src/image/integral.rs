use super::GrayImage;
use crate::{Error, Rect, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Upright,
    /// 45-degree rotated prefix sums: entry `(X, Y)` holds the sum of pixels
    /// `(x', y')` with `y' < Y` and `|x' - X + 1| <= Y - y' - 1`.
    Tilted,
}

/// `(width+1) x (height+1)` table of 64-bit prefix sums.
#[derive(Clone, Debug)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    variant: Variant,
    sums: Vec<u64>,
    squares: Option<Vec<u64>>,
}

pub fn integral_image(img: &GrayImage, variant: Variant, with_squares: bool) -> IntegralImage {
    let build = |f: fn(u8) -> u64| match variant {
        Variant::Upright => upright_table(img, f),
        Variant::Tilted => tilted_table(img, f),
    };
    IntegralImage {
        width: img.width(),
        height: img.height(),
        variant,
        sums: build(|v| v as u64),
        squares: with_squares.then(|| build(|v| v as u64 * v as u64)),
    }
}

fn upright_table(img: &GrayImage, f: fn(u8) -> u64) -> Vec<u64> {
    let (w, h) = (img.width(), img.height());
    let stride = w + 1;
    let mut table = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += f(img.get(x, y));
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
        }
    }
    table
}

fn tilted_table(img: &GrayImage, f: fn(u8) -> u64) -> Vec<u64> {
    let (w, h) = (img.width(), img.height());
    // The cone under (X, Y) widens by one column per row, so `h + 1` columns
    // of padding on each side make every neighbour reference land in the
    // padded grid, where entries beyond the image are zero.
    let pad = h + 1;
    let pw = w + 2 * pad + 1;
    let mut padded = vec![0u64; pw * (h + 1)];
    let pixel = |x: isize, y: isize| -> u64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            f(img.get(x as usize, y as usize))
        }
    };
    for yy in 1..=h {
        for col in 0..pw {
            let xx = col as isize - pad as isize;
            let mut v = pixel(xx - 1, yy as isize - 1) + pixel(xx - 1, yy as isize - 2);
            if col > 0 {
                v += padded[(yy - 1) * pw + col - 1];
            }
            if col + 1 < pw {
                v += padded[(yy - 1) * pw + col + 1];
            }
            if yy >= 2 {
                v -= padded[(yy - 2) * pw + col];
            }
            padded[yy * pw + col] = v;
        }
    }
    let stride = w + 1;
    let mut table = vec![0u64; stride * (h + 1)];
    for yy in 0..=h {
        table[yy * stride..(yy + 1) * stride].copy_from_slice(&padded[yy * pw + pad..yy * pw + pad + stride]);
    }
    table
}

impl IntegralImage {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Source image width.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Source image height.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn has_squares(&self) -> bool {
        self.squares.is_some()
    }

    /// Table entry at grid coordinates `(x, y)`, `x <= width`, `y <= height`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u64 {
        self.sums[y * (self.width + 1) + x]
    }

    #[inline]
    fn square_at(&self, x: usize, y: usize) -> u64 {
        self.squares.as_ref().expect("squared table present")[y * (self.width + 1) + x]
    }

    /// True when `rect` can be summed against this table. For the tilted
    /// variant `rect` is a rotated rectangle with top corner `(x, y)`,
    /// extending `w` to the lower right and `h` to the lower left.
    pub fn contains(&self, rect: Rect) -> bool {
        match self.variant {
            Variant::Upright => rect.fits(self.width, self.height),
            Variant::Tilted => {
                rect.x >= rect.h && rect.x + rect.w <= self.width && rect.y + rect.w + rect.h <= self.height
            }
        }
    }

    fn check(&self, rect: Rect) -> Result<()> {
        if self.contains(rect) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                rect,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Exact pixel sum over `rect` with four table lookups.
    pub fn rect_sum(&self, rect: Rect) -> Result<u64> {
        if rect.w == 0 || rect.h == 0 {
            return Ok(0);
        }
        self.check(rect)?;
        Ok(self.sum_with(rect, |x, y| self.at(x, y)))
    }

    /// Sum of squared pixels over `rect`; requires a table built with squares.
    pub fn square_sum(&self, rect: Rect) -> Result<u64> {
        if self.squares.is_none() {
            return Err(Error::InvalidParameter("integral image has no squared table".into()));
        }
        if rect.w == 0 || rect.h == 0 {
            return Ok(0);
        }
        self.check(rect)?;
        Ok(self.sum_with(rect, |x, y| self.square_at(x, y)))
    }

    /// Unchecked sum used on hot paths where bounds are established up front.
    #[inline]
    pub(crate) fn sum_unchecked(&self, rect: Rect) -> u64 {
        self.sum_with(rect, |x, y| self.at(x, y))
    }

    #[inline]
    pub(crate) fn square_sum_unchecked(&self, rect: Rect) -> u64 {
        self.sum_with(rect, |x, y| self.square_at(x, y))
    }

    #[inline]
    fn sum_with(&self, r: Rect, at: impl Fn(usize, usize) -> u64) -> u64 {
        match self.variant {
            Variant::Upright => {
                at(r.x + r.w, r.y + r.h) + at(r.x, r.y) - at(r.x, r.y + r.h) - at(r.x + r.w, r.y)
            }
            Variant::Tilted => {
                at(r.x + r.w - r.h, r.y + r.w + r.h) + at(r.x, r.y)
                    - at(r.x - r.h, r.y + r.h)
                    - at(r.x + r.w, r.y + r.w)
            }
        }
    }
}
