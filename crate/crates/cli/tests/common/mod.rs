//! Synthetic face corpus shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use facedet::image::pnm::{write_pgm, write_ppm};
use facedet::image::{resize_bilinear, rgb_to_ycbcr, to_grayscale, GrayImage, RgbImage};
use facedet::pipeline::preprocess_gray;
use facedet::config::PreprocessParams;
use facedet::skin::SkinThresholds;
use facedet::Rect;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCENE_W: usize = 160;
pub const SCENE_H: usize = 120;
pub const BASE: usize = 24;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_facedet")
}

fn is_skin(c: [u8; 3]) -> bool {
    let img = RgbImage::new(1, 1, vec![c]).unwrap();
    let [_, cb, cr] = rgb_to_ycbcr(&img).get(0, 0);
    SkinThresholds::default().contains(cb, cr)
}

pub fn skin_colour(rng: &mut ChaCha8Rng) -> [u8; 3] {
    loop {
        let r = rng.gen_range(170..=225u8);
        let c = [r, r - rng.gen_range(40..=60), r - rng.gen_range(70..=95)];
        if is_skin(c) {
            return c;
        }
    }
}

pub fn non_skin_colour(rng: &mut ChaCha8Rng) -> [u8; 3] {
    loop {
        let c: [u8; 3] = [rng.gen(), rng.gen(), rng.gen()];
        if !is_skin(c) {
            return c;
        }
    }
}

fn scale(c: [u8; 3], k: f64) -> [u8; 3] {
    c.map(|v| (v as f64 * k).round().clamp(0.0, 255.0) as u8)
}

/// Cluttered scene without faces. `skin_clutter` is the chance that a
/// shape is skin-coloured.
pub fn background(rng: &mut ChaCha8Rng, w: usize, h: usize, skin_clutter: f64) -> RgbImage {
    let top = non_skin_colour(rng);
    let bottom = non_skin_colour(rng);
    let mut img = RgbImage::from_fn(w, h, |_, y| {
        let t = y as f64 / h as f64;
        [0, 1, 2].map(|i| (top[i] as f64 * (1.0 - t) + bottom[i] as f64 * t) as u8)
    })
    .unwrap();
    for _ in 0..rng.gen_range(12..28) {
        let colour = if rng.gen_bool(skin_clutter) {
            skin_colour(rng)
        } else {
            non_skin_colour(rng)
        };
        let (cx, cy) = (rng.gen_range(0..w) as f64, rng.gen_range(0..h) as f64);
        let (rx, ry) = (rng.gen_range(3.0..30.0), rng.gen_range(3.0..30.0));
        let kind = rng.gen_range(0..4);
        let stripe = rng.gen_range(2.0..6.0);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let inside = match kind {
                    0 => dx.abs() <= 1.0 && dy.abs() <= 1.0,
                    1 => dx * dx + dy * dy <= 1.0,
                    // thin line
                    2 => dy.abs() <= 0.12 && dx.abs() <= 1.0,
                    _ => dx.abs() <= 1.0 && dy.abs() <= 1.0 && ((x as f64 / stripe) as usize + (y as f64 / stripe) as usize).is_multiple_of(2),
                };
                if inside {
                    img.put(x, y, colour);
                }
            }
        }
    }
    img
}

/// Paints a face filling the square `r`: a skin oval with brows, eyes,
/// nose and mouth over a fixed fine skin texture.
pub fn render_face(img: &mut RgbImage, r: Rect, rng: &mut ChaCha8Rng) {
    let skin = skin_colour(rng);
    let light = rng.gen_range(0.8..1.1);
    let j = |rng: &mut ChaCha8Rng| rng.gen_range(-0.02..0.02);
    let (ex, ey) = (0.3 + j(rng), 0.4 + j(rng));
    let my = 0.76 + j(rng);
    let s = r.w as f64;
    for py in r.y..r.bottom() {
        for px in r.x..r.right() {
            let u = (px - r.x) as f64 / s + 0.5 / s;
            let v = (py - r.y) as f64 / s + 0.5 / s;
            let (ou, ov) = ((u - 0.5) / 0.46, (v - 0.5) / 0.52);
            if ou * ou + ov * ov > 1.0 {
                continue;
            }
            let mut k = light * (1.05 - 0.15 * v);
            let du = (u - 0.5).abs();
            let eye = ((du - (0.5 - ex)) / 0.1).powi(2) + ((v - ey) / 0.055).powi(2);
            if eye <= 1.0 {
                k *= 0.25;
            } else if (v - (ey - 0.12)).abs() < 0.03 && (du - (0.5 - ex)).abs() < 0.12 {
                k *= 0.5;
            } else if du < 0.04 && v > ey + 0.04 && v < my - 0.12 {
                k *= 0.85;
            } else if (du / 0.16).powi(2) + ((v - my) / 0.045).powi(2) <= 1.0 {
                k *= 0.45;
            }
            let texture = 1.0 + 0.07 * ((px - r.x) as f64 * 2.1).sin() * ((py - r.y) as f64 * 1.7).cos();
            img.put(px, py, scale(skin, k * texture));
        }
    }
}

pub fn add_noise(img: &mut RgbImage, rng: &mut ChaCha8Rng, amp: i32) {
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.get(x, y);
            let q = p.map(|v| (v as i32 + rng.gen_range(-amp..=amp)).clamp(0, 255) as u8);
            img.put(x, y, q);
        }
    }
}

fn place_faces(rng: &mut ChaCha8Rng, w: usize, h: usize, n: usize, x_max: usize) -> Vec<Rect> {
    let mut faces: Vec<Rect> = Vec::new();
    let mut tries = 0;
    while faces.len() < n && tries < 500 {
        tries += 1;
        let s = rng.gen_range(24..=56).min(h).min(x_max);
        let f = Rect::square(rng.gen_range(0..=x_max - s), rng.gen_range(0..=h - s), s);
        let grown = |r: &Rect| Rect::new(r.x.saturating_sub(6), r.y.saturating_sub(6), r.w + 12, r.h + 12);
        if faces.iter().all(|o| grown(o).intersection_area(&f) == 0) {
            faces.push(f);
        }
    }
    let _ = w;
    faces
}

/// Scene with one or two faces.
pub fn scene(rng: &mut ChaCha8Rng) -> (RgbImage, Vec<Rect>) {
    let mut img = background(rng, SCENE_W, SCENE_H, 0.15);
    let n = rng.gen_range(1..=2);
    let faces = place_faces(rng, SCENE_W, SCENE_H, n, SCENE_W);
    for f in &faces {
        render_face(&mut img, *f, rng);
    }
    add_noise(&mut img, rng, 6);
    (img, faces)
}

/// Left half skin-rich with faces, right half free of skin colour.
pub fn half_skin_scene(rng: &mut ChaCha8Rng) -> (RgbImage, Vec<Rect>) {
    let half = SCENE_W / 2;
    let left = background(rng, half, SCENE_H, 0.5);
    let right = background(rng, SCENE_W - half, SCENE_H, 0.0);
    let mut img = RgbImage::from_fn(SCENE_W, SCENE_H, |x, y| {
        if x < half {
            left.get(x, y)
        } else {
            right.get(x - half, y)
        }
    })
    .unwrap();
    let n = rng.gen_range(1..=2);
    let faces = place_faces(rng, SCENE_W, SCENE_H, n, half);
    for f in &faces {
        render_face(&mut img, *f, rng);
    }
    // noise stays within a few levels so the right half remains non-skin
    add_noise(&mut img, rng, 2);
    (img, faces)
}

pub fn prep(img: &RgbImage) -> GrayImage {
    preprocess_gray(&to_grayscale(img), &PreprocessParams::default()).unwrap()
}

fn flip(img: &GrayImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| img.get(img.width() - 1 - x, y)).unwrap()
}

fn jittered(f: &Rect, gray: &GrayImage, shift: f64, zoom: f64, rng: &mut ChaCha8Rng) -> Rect {
    let s = ((f.w as f64 * (1.0 + rng.gen_range(-zoom..=zoom))).round() as usize)
        .clamp(BASE, gray.width().min(gray.height()));
    let mut c = |o: usize| o as f64 + f.w as f64 / 2.0 + f.w as f64 * rng.gen_range(-shift..=shift) - s as f64 / 2.0;
    let x = c(f.x).round().clamp(0.0, (gray.width() - s) as f64) as usize;
    let y = c(f.y).round().clamp(0.0, (gray.height() - s) as f64) as usize;
    Rect::square(x, y, s)
}

/// Base-window training samples of the faces of a scene: the exact box,
/// shifted and rescaled boxes that still overlap it well, and their mirror
/// images.
pub fn face_samples(gray: &GrayImage, faces: &[Rect], rng: &mut ChaCha8Rng) -> Vec<GrayImage> {
    let mut out = Vec::new();
    for f in faces {
        let mut boxes = vec![*f];
        while boxes.len() < 4 {
            let b = jittered(f, gray, 0.1, 0.12, rng);
            if b.iou(f) >= 0.6 {
                boxes.push(b);
            }
        }
        for b in boxes {
            let patch = resize_bilinear(&gray.crop(b).unwrap(), BASE, BASE).unwrap();
            out.push(flip(&patch));
            out.push(patch);
        }
    }
    out
}

/// Windows that cut through a face without framing it.
pub fn partial_face_samples(gray: &GrayImage, faces: &[Rect], per_face: usize, rng: &mut ChaCha8Rng) -> Vec<GrayImage> {
    let mut out = Vec::new();
    for f in faces {
        let mut found = 0;
        for _ in 0..200 {
            if found == per_face {
                break;
            }
            let b = jittered(f, gray, 0.6, 0.4, rng);
            let iou = faces.iter().map(|o| o.iou(&b)).fold(0.0, f64::max);
            if iou > 0.05 && iou < 0.35 {
                out.push(resize_bilinear(&gray.crop(b).unwrap(), BASE, BASE).unwrap());
                found += 1;
            }
        }
    }
    out
}

pub struct Corpus {
    pub root: PathBuf,
    pub pos: PathBuf,
    pub neg: PathBuf,
    pub pool: PathBuf,
    pub test_manifest: PathBuf,
    pub train_manifest: PathBuf,
    /// Preprocessed held-out negative windows.
    pub held_out_negatives: Vec<GrayImage>,
    pub positives: Vec<GrayImage>,
}

fn write_manifest(path: &Path, rows: &[(String, Vec<Rect>)]) {
    let mut text = String::new();
    for (p, faces) in rows {
        text.push_str(&format!("{p} {}", faces.len()));
        for f in faces {
            text.push_str(&format!(" {} {} {} {}", f.x, f.y, f.w, f.h));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn random_windows(gray: &GrayImage, n: usize, rng: &mut ChaCha8Rng) -> Vec<GrayImage> {
    (0..n)
        .map(|_| {
            let s = rng.gen_range(BASE..=gray.height().min(72));
            let r = Rect::square(rng.gen_range(0..=gray.width() - s), rng.gen_range(0..=gray.height() - s), s);
            resize_bilinear(&gray.crop(r).unwrap(), BASE, BASE).unwrap()
        })
        .collect()
}

/// Writes `train` scenes' face samples, random negatives from `pool`
/// backgrounds plus partial-face windows, the pool itself and a manifest of
/// `test` scenes.
pub fn build_corpus(root: &Path, seed: u64, train: usize, test: usize, pool: usize, negatives: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = ["pos", "neg", "pool", "test", "train"].map(|d| {
        let p = root.join(d);
        std::fs::create_dir_all(&p).unwrap();
        p
    });
    let mut positives = Vec::new();
    let mut partial = Vec::new();
    let mut train_rows = Vec::new();
    for i in 0..train {
        let (img, faces) = scene(&mut rng);
        let gray = prep(&img);
        positives.extend(face_samples(&gray, &faces, &mut rng));
        partial.extend(partial_face_samples(&gray, &faces, 2, &mut rng));
        let name = format!("train/s{i:04}.ppm");
        write_ppm(root.join(&name), &img).unwrap();
        train_rows.push((name, faces));
    }
    for (i, p) in positives.iter().enumerate() {
        write_pgm(dirs[0].join(format!("p{i:05}.pgm")), p).unwrap();
    }
    let mut backs = Vec::new();
    for i in 0..pool {
        let mut img = background(&mut rng, SCENE_W, SCENE_H, 0.15);
        add_noise(&mut img, &mut rng, 6);
        write_pgm(dirs[2].join(format!("b{i:04}.pgm")), &to_grayscale(&img)).unwrap();
        backs.push(prep(&img));
    }
    let per = negatives.div_ceil(pool.max(1));
    let mut k = 0;
    for b in &backs {
        for n in random_windows(b, per, &mut rng) {
            if k < negatives {
                write_pgm(dirs[1].join(format!("n{k:05}.pgm")), &n).unwrap();
                k += 1;
            }
        }
    }
    for (i, n) in partial.iter().enumerate() {
        write_pgm(dirs[1].join(format!("f{i:05}.pgm")), n).unwrap();
    }
    let mut held_out_negatives = Vec::new();
    for _ in 0..20 {
        let mut img = background(&mut rng, SCENE_W, SCENE_H, 0.15);
        add_noise(&mut img, &mut rng, 6);
        held_out_negatives.extend(random_windows(&prep(&img), 50, &mut rng));
    }
    let mut rows = Vec::new();
    for i in 0..test {
        let (img, faces) = scene(&mut rng);
        let name = format!("test/t{i:04}.ppm");
        write_ppm(root.join(&name), &img).unwrap();
        rows.push((name, faces));
    }
    let test_manifest = root.join("test.txt");
    write_manifest(&test_manifest, &rows);
    let train_manifest = root.join("train.txt");
    write_manifest(&train_manifest, &train_rows);
    Corpus {
        root: root.to_path_buf(),
        pos: dirs[0].clone(),
        neg: dirs[1].clone(),
        pool: dirs[2].clone(),
        test_manifest,
        train_manifest,
        held_out_negatives,
        positives,
    }
}
