use std::sync::OnceLock;

use crate::image::{resize_bilinear, GrayImage};
use crate::{Error, Result};

/// Neighbour offsets, clockwise from the top-left; bit `i` is neighbour `i`.
const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];

pub const COARSE_BINS: usize = 59;
pub const FINE_BLOCKS: usize = 9;
pub const FINE_BINS: usize = 16;
pub const FINE_LEN: usize = FINE_BLOCKS * FINE_BINS;
pub const FINE_PATCH: usize = 16;
pub const BLOCK_SIZE: usize = 6;
pub const BLOCK_OFFSETS: [usize; 3] = [0, 4, 8];

/// `(w-2) x (h-2)` grid of LBP(R=1, N=8) codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LbpLabelImage {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LbpLabelImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }
}

/// Bit `i` is set iff neighbour `i` is at least the center value.
pub fn lbp_label_image(img: &GrayImage) -> Result<LbpLabelImage> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::Dimensions(format!("LBP needs at least 3x3, got {w}x{h}")));
    }
    let mut labels = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = img.get(x, y);
            let mut code = 0u8;
            for (bit, (dx, dy)) in NEIGHBOURS.iter().enumerate() {
                let n = img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
                if n >= c {
                    code |= 1 << bit;
                }
            }
            labels.push(code);
        }
    }
    Ok(LbpLabelImage {
        width: w - 2,
        height: h - 2,
        labels,
    })
}

/// Circular 0/1 transitions in an 8-bit code.
pub fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

/// Maps each code to a coarse bin: uniform codes (at most two transitions)
/// take bins 0..58 in ascending code order, all others share bin 58.
pub fn uniform_pattern_table() -> &'static [u8; 256] {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [(COARSE_BINS - 1) as u8; 256];
        let mut next = 0u8;
        for code in 0..=255u8 {
            if transitions(code) <= 2 {
                table[code as usize] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next as usize, COARSE_BINS - 1);
        table
    })
}

pub fn coarse_histogram(labels: &LbpLabelImage) -> [u32; COARSE_BINS] {
    let table = uniform_pattern_table();
    let mut hist = [0u32; COARSE_BINS];
    for &l in &labels.labels {
        hist[table[l as usize] as usize] += 1;
    }
    hist
}

/// Bilinear resample to the 16x16 fine-stage patch.
pub fn resize_to_16(patch: &GrayImage) -> Result<GrayImage> {
    if patch.width() < 2 || patch.height() < 2 {
        return Err(Error::Dimensions(format!(
            "patch {}x{} too small to resample",
            patch.width(),
            patch.height()
        )));
    }
    resize_bilinear(patch, FINE_PATCH, FINE_PATCH)
}

/// Nine overlapping 6x6 blocks of the 14x14 label image, each a 16-bin
/// histogram of `label / 16`, concatenated row-major.
pub fn fine_features(patch16: &GrayImage) -> Result<[u32; FINE_LEN]> {
    if patch16.width() != FINE_PATCH || patch16.height() != FINE_PATCH {
        return Err(Error::Dimensions(format!(
            "fine stage needs a 16x16 patch, got {}x{}",
            patch16.width(),
            patch16.height()
        )));
    }
    let labels = lbp_label_image(patch16)?;
    let mut out = [0u32; FINE_LEN];
    for (by, &oy) in BLOCK_OFFSETS.iter().enumerate() {
        for (bx, &ox) in BLOCK_OFFSETS.iter().enumerate() {
            let block = by * 3 + bx;
            for y in oy..oy + BLOCK_SIZE {
                for x in ox..ox + BLOCK_SIZE {
                    out[block * FINE_BINS + (labels.get(x, y) >> 4) as usize] += 1;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, w: usize, h: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.gen()).unwrap()
    }

    #[test]
    fn constant_image_is_all_ones_code() {
        let l = lbp_label_image(&GrayImage::filled(6, 5, 80).unwrap()).unwrap();
        assert_eq!((l.width(), l.height()), (4, 3));
        assert!(l.labels().iter().all(|&v| v == 255));
        assert!(lbp_label_image(&GrayImage::filled(2, 5, 0).unwrap()).is_err());
    }

    #[test]
    fn alternating_neighbours() {
        // clockwise from top-left: 6,4,6,4,6,4,6,4
        let img = GrayImage::new(3, 3, vec![6, 4, 6, 4, 5, 4, 6, 4, 6]).unwrap();
        assert_eq!(lbp_label_image(&img).unwrap().get(0, 0), 0b0101_0101);
    }

    #[test]
    fn labels_match_bitwise_oracle() {
        let img = random(1, 8, 8);
        let l = lbp_label_image(&img).unwrap();
        for y in 1..7 {
            for x in 1..7 {
                let c = img.get(x, y);
                let ring = [
                    img.get(x - 1, y - 1),
                    img.get(x, y - 1),
                    img.get(x + 1, y - 1),
                    img.get(x + 1, y),
                    img.get(x + 1, y + 1),
                    img.get(x, y + 1),
                    img.get(x - 1, y + 1),
                    img.get(x - 1, y),
                ];
                let mut code = 0u32;
                for (i, &n) in ring.iter().enumerate() {
                    if n >= c {
                        code += 1 << i;
                    }
                }
                assert_eq!(l.get(x - 1, y - 1) as u32, code);
            }
        }
    }

    #[test]
    fn uniform_table_shape() {
        let t = uniform_pattern_table();
        let mut uniform = 0;
        for code in 0..256usize {
            // count transitions bit by bit around the ring
            let mut tr = 0;
            for i in 0..8 {
                if (code >> i) & 1 != (code >> ((i + 1) % 8)) & 1 {
                    tr += 1;
                }
            }
            if tr <= 2 {
                assert_eq!(t[code] as usize, uniform);
                uniform += 1;
            } else {
                assert_eq!(t[code], 58);
            }
        }
        assert_eq!(uniform, 58);
        assert!(t[0] < 58);
        assert_eq!(t[85], 58);
        assert_eq!(t[255], 57);
    }

    #[test]
    fn coarse_histogram_examples() {
        let c = lbp_label_image(&GrayImage::filled(10, 10, 3).unwrap()).unwrap();
        let h = coarse_histogram(&c);
        assert_eq!(h[uniform_pattern_table()[255] as usize], 64);
        assert_eq!(h.iter().sum::<u32>(), 64);

        let img = random(2, 13, 9);
        let l = lbp_label_image(&img).unwrap();
        let h = coarse_histogram(&l);
        let mut tally = [0u32; 59];
        for &code in l.labels() {
            let bin = if transitions(code) <= 2 {
                (0..code).filter(|&c| transitions(c) <= 2).count()
            } else {
                58
            };
            tally[bin] += 1;
        }
        assert_eq!(h, tally);
        assert_eq!(h.iter().sum::<u32>(), 11 * 7);
    }

    #[test]
    fn resize_examples() {
        let img = random(3, 16, 16);
        assert_eq!(resize_to_16(&img).unwrap(), img);
        let flat = resize_to_16(&GrayImage::filled(32, 32, 77).unwrap()).unwrap();
        assert!(flat.data().iter().all(|&v| v == 77));
        let ramp = GrayImage::from_fn(32, 32, |x, _| (x * 8) as u8).unwrap();
        let small = resize_to_16(&ramp).unwrap();
        assert_eq!((small.width(), small.height()), (16, 16));
        for y in 0..16 {
            assert!((small.get(0, y) as i32).abs() <= 1);
            assert!((small.get(15, y) as i32 - 248).abs() <= 1);
            for x in 1..16 {
                assert!(small.get(x, y) >= small.get(x - 1, y));
            }
        }
        assert!(resize_to_16(&GrayImage::filled(1, 5, 0).unwrap()).is_err());
    }

    #[test]
    fn fine_examples() {
        let f = fine_features(&GrayImage::filled(16, 16, 99).unwrap()).unwrap();
        for block in 0..9 {
            for bin in 0..16 {
                assert_eq!(f[block * 16 + bin], if bin == 15 { 36 } else { 0 });
            }
        }
        assert_eq!(BLOCK_OFFSETS[2] + BLOCK_SIZE, 14);
        assert!(fine_features(&GrayImage::filled(15, 16, 0).unwrap()).is_err());
    }

    #[test]
    fn fine_matches_block_tally() {
        let img = random(4, 16, 16);
        let l = lbp_label_image(&img).unwrap();
        assert_eq!((l.width(), l.height()), (14, 14));
        let f = fine_features(&img).unwrap();
        let mut expect = vec![0u32; 144];
        let mut block = 0;
        for by in [0, 4, 8] {
            for bx in [0, 4, 8] {
                for y in by..by + 6 {
                    for x in bx..bx + 6 {
                        expect[block * 16 + l.get(x, y) as usize / 16] += 1;
                    }
                }
                block += 1;
            }
        }
        assert_eq!(f.to_vec(), expect);
        for b in 0..9 {
            assert_eq!(f[b * 16..(b + 1) * 16].iter().sum::<u32>(), 36);
        }
    }

    proptest! {
        #[test]
        fn labels_invariant_under_monotone_remap(seed: u64, lut_seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(9, 7, |_, _| rng.gen_range(0..128)).unwrap();
            // strictly increasing table: gaps of 1 or 2 keep 127 inputs within u8
            let mut rng = ChaCha8Rng::seed_from_u64(lut_seed);
            let mut lut = [0u8; 128];
            let mut acc = rng.gen_range(0..=1u8);
            for slot in lut.iter_mut() {
                *slot = acc;
                acc = acc.saturating_add(rng.gen_range(1..=2));
            }
            let mapped = GrayImage::from_fn(9, 7, |x, y| lut[img.get(x, y) as usize]).unwrap();
            prop_assert_eq!(lbp_label_image(&img).unwrap(), lbp_label_image(&mapped).unwrap());
        }
    }
}
