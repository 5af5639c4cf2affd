//! Binary Netpbm I/O: PGM (`P5`) and PPM (`P6`), 8 bits per sample.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GrayImage, RgbImage};
use crate::{Error, Result};

/// Either kind of decoded Netpbm raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PnmImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl PnmImage {
    pub fn to_gray(&self) -> GrayImage {
        match self {
            PnmImage::Gray(g) => g.clone(),
            PnmImage::Rgb(c) => super::to_grayscale(c),
        }
    }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'5' || bytes[1] == b'6') {
        return Err(Error::Format("not a binary PGM/PPM (expected P5 or P6)".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated or non-numeric header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("header value too large".into()))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Format("missing whitespace after maxval".into()));
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}; only 8-bit samples")));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        data_offset: pos + 1,
    })
}

pub fn decode(bytes: &[u8]) -> Result<PnmImage> {
    let hdr = parse_header(bytes)?;
    let channels = if hdr.magic[1] == b'5' { 1 } else { 3 };
    let need = hdr
        .width
        .checked_mul(hdr.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format("image too large".into()))?;
    let raster = &bytes[hdr.data_offset..];
    if raster.len() < need {
        return Err(Error::Format(format!(
            "raster truncated: need {need} bytes, found {}",
            raster.len()
        )));
    }
    let raster = &raster[..need];
    if channels == 1 {
        Ok(PnmImage::Gray(GrayImage::new(hdr.width, hdr.height, raster.to_vec())?))
    } else {
        let px = raster.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(PnmImage::Rgb(RgbImage::new(hdr.width, hdr.height, px)?))
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().flatten());
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<PnmImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    read(path).map(|img| img.to_gray())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(img))
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    write_bytes(path.as_ref(), &encode_ppm(img))
}
