//! Behaviour of the `facedet` binary on small synthetic inputs.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use facedet::haar::Cascade;
use facedet::image::pnm::{read, read_gray, write_pgm, write_ppm, PnmImage};
use facedet::image::{GrayImage, RgbImage};

fn run(args: &[&str]) -> Output {
    Command::new(common::bin()).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let p = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&p);
    std::fs::create_dir_all(&p).unwrap();
    p
}

const QUICK: [&str; 8] = ["--stages", "2", "--max-features", "600", "--seed", "3", "--svm-epochs", "10"];

struct Trained {
    corpus: common::Corpus,
    model: PathBuf,
    svm: PathBuf,
    log: String,
}

fn train_into(corpus: &common::Corpus, dir: &Path, tag: &str) -> (PathBuf, PathBuf, String) {
    let model = dir.join(format!("{tag}.cascade"));
    let svm = dir.join(format!("{tag}.svm"));
    let mut args = QUICK.to_vec();
    args.extend([
        "train", "--pos", s(&corpus.pos), "--neg", s(&corpus.neg), "--pool", s(&corpus.pool), "--out", s(&model),
        "--svm-out", s(&svm),
    ]);
    let log = ok(&args);
    (model, svm, log)
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = scratch("trained");
        let corpus = common::build_corpus(&dir, 99, 40, 8, 6, 300);
        let (model, svm, log) = train_into(&corpus, &dir, "model");
        Trained { corpus, model, svm, log }
    })
}

fn test_images(t: &Trained) -> Vec<PathBuf> {
    std::fs::read_to_string(&t.corpus.test_manifest)
        .unwrap()
        .lines()
        .map(|l| t.corpus.root.join(l.split_whitespace().next().unwrap()))
        .collect()
}

fn skin_disk(size: usize, radius: f64) -> RgbImage {
    let c = size as f64 / 2.0;
    RgbImage::from_fn(size, size, |x, y| {
        let d = ((x as f64 + 0.5 - c).powi(2) + (y as f64 + 0.5 - c).powi(2)).sqrt();
        if d <= radius {
            [200, 150, 120]
        } else {
            [30, 60, 200]
        }
    })
    .unwrap()
}

#[test]
fn segment_disk_keeps_the_disk_interior() {
    let dir = scratch("segment_disk");
    let input = dir.join("disk.ppm");
    let output = dir.join("mask.pgm");
    let (size, radius) = (80usize, 24.0);
    write_ppm(&input, &skin_disk(size, radius)).unwrap();
    let line = ok(&["segment", s(&input), s(&output)]);
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields[0], "skin_ratio");
    assert_eq!(fields[2..], ["regions", "1"]);
    let ratio: f64 = fields[1].parse().unwrap();
    let mask = read_gray(&output).unwrap();
    assert_eq!((mask.width(), mask.height()), (size, size));
    // Only the edge ring along the colour boundary may be lost.
    let c = size as f64 / 2.0;
    let mut disk = 0;
    for y in 0..size {
        for x in 0..size {
            let d = ((x as f64 + 0.5 - c).powi(2) + (y as f64 + 0.5 - c).powi(2)).sqrt();
            let on = mask.get(x, y) == 255;
            disk += (d <= radius) as usize;
            if on {
                assert!(d <= radius, "({x}, {y}) outside the disk");
            } else if d <= radius {
                assert!(d > radius - 2.5, "({x}, {y}) inside the disk is lost");
            }
        }
    }
    let disk = 100.0 * disk as f64 / (size * size) as f64;
    let ring = 100.0 * 2.0 * std::f64::consts::TAU * radius / (size * size) as f64;
    assert!(ratio <= disk && ratio >= disk - ring, "ratio {ratio} vs disk {disk:.2}");
}

#[test]
fn segment_black_image_is_empty() {
    let dir = scratch("segment_black");
    let input = dir.join("black.ppm");
    let output = dir.join("mask.pgm");
    write_ppm(&input, &RgbImage::from_fn(32, 24, |_, _| [0, 0, 0]).unwrap()).unwrap();
    assert_eq!(ok(&["segment", s(&input), s(&output)]), "skin_ratio 0.00 regions 0\n");
    let mask = read_gray(&output).unwrap();
    assert!(mask.data().iter().all(|&v| v == 0));
}

#[test]
fn segment_missing_input_is_a_data_error() {
    let dir = scratch("segment_missing");
    let missing = dir.join("nope.ppm");
    let out = run(&["segment", s(&missing), s(&dir.join("m.pgm"))]);
    assert_eq!(out.status.code(), Some(facedet_cli::EXIT_DATA));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ppm"));
}

#[test]
fn segment_rejects_gray_input() {
    let dir = scratch("segment_gray");
    let input = dir.join("g.pgm");
    write_pgm(&input, &GrayImage::from_fn(8, 8, |_, _| 9).unwrap()).unwrap();
    let out = run(&["segment", s(&input), s(&dir.join("m.pgm"))]);
    assert_eq!(out.status.code(), Some(facedet_cli::EXIT_DATA));
}

#[test]
fn train_writes_loadable_models_and_respects_stage_fpr() {
    let t = trained();
    let cascade = Cascade::load(&t.model).unwrap();
    assert_eq!(cascade.stages.len(), 2);
    assert_eq!(cascade.base_window, common::BASE);
    facedet::exlbp::LinearSvmModel::load(&t.svm).unwrap();
    let stage_lines: Vec<&str> = t.log.lines().filter(|l| l.starts_with("stage ")).collect();
    assert_eq!(stage_lines.len(), 2, "{}", t.log);
    for l in stage_lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        let fpr: f64 = f[5].parse().unwrap();
        assert!(fpr <= 0.5, "{l}");
    }
}

#[test]
fn train_same_seed_gives_same_bytes() {
    let t = trained();
    let dir = scratch("retrain");
    let (model, svm, _) = train_into(&t.corpus, &dir, "again");
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&t.model).unwrap());
    assert_eq!(std::fs::read(&svm).unwrap(), std::fs::read(&t.svm).unwrap());
}

#[test]
fn train_with_empty_positive_dir_fails() {
    let t = trained();
    let dir = scratch("train_empty");
    let empty = dir.join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = run(&["train", "--pos", s(&empty), "--neg", s(&t.corpus.neg), "--out", s(&dir.join("m"))]);
    assert_eq!(out.status.code(), Some(facedet_cli::EXIT_DATA));
}

fn detections(text: &str) -> Vec<[u64; 4]> {
    text.lines()
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            assert_eq!(f.len(), 5, "{l}");
            [0, 1, 2, 3].map(|i| f[i].parse().unwrap())
        })
        .collect()
}

#[test]
fn detect_skips_all_windows_without_skin() {
    let t = trained();
    let dir = scratch("detect_noskin");
    let input = dir.join("blue.ppm");
    write_ppm(&input, &RgbImage::from_fn(96, 72, |x, y| [20, (x + y) as u8, 180]).unwrap()).unwrap();
    let out = run(&["detect", "--model", s(&t.model), "--svm", s(&t.svm), s(&input)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("windows_evaluated 0 "), "{err}");
}

#[test]
fn validated_detections_are_a_subset_of_cascade_ones() {
    let t = trained();
    let mut cascade_total = 0;
    for img in test_images(t) {
        let plain = ok(&["detect", "--model", s(&t.model), s(&img)]);
        let no_validate = ok(&["detect", "--model", s(&t.model), "--svm", s(&t.svm), "--no-validate", s(&img)]);
        assert_eq!(plain, no_validate);
        let validated = ok(&["detect", "--model", s(&t.model), "--svm", s(&t.svm), s(&img)]);
        let all: Vec<&str> = plain.lines().collect();
        for line in validated.lines() {
            assert!(all.contains(&line), "{line} not among cascade detections");
        }
        cascade_total += all.len();
    }
    assert!(cascade_total > 0);
}

#[test]
fn detect_annotates_and_writes_to_file() {
    let t = trained();
    let dir = scratch("detect_annotate");
    let img = test_images(t)
        .into_iter()
        .find(|p| !ok(&["detect", "--model", s(&t.model), s(p)]).is_empty())
        .expect("some test image has detections");
    let out = dir.join("dets.txt");
    let annotated = dir.join("boxes.ppm");
    let stdout = ok(&["detect", "--model", s(&t.model), s(&img), "--out", s(&out), "--annotate", s(&annotated)]);
    assert!(stdout.is_empty());
    let dets = detections(&std::fs::read_to_string(&out).unwrap());
    let PnmImage::Rgb(canvas) = read(&annotated).unwrap() else { panic!("annotation is colour") };
    let [x, y, _, _] = dets[0];
    assert_eq!(canvas.get(x as usize, y as usize), [255, 0, 0]);
}

#[test]
fn detect_rejects_base_window_mismatch() {
    let t = trained();
    let dir = scratch("detect_mismatch");
    let text = std::fs::read_to_string(&t.model).unwrap();
    let model = dir.join("m.cascade");
    let size = common::BASE.to_string();
    let first = text.lines().next().unwrap().replacen(&size, "20", 1);
    let rest: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    std::fs::write(&model, format!("{first}\n{rest}")).unwrap();
    let Ok(_) = Cascade::load(&model) else { return };
    let img = &test_images(t)[0];
    let out = run(&["detect", "--model", s(&model), "--svm", s(&t.svm), s(img)]);
    assert_eq!(out.status.code(), Some(facedet_cli::EXIT_DATA));
}

#[test]
fn eval_prints_both_rows_and_writes_roc() {
    let t = trained();
    let dir = scratch("eval");
    let roc = dir.join("roc.csv");
    let csv = dir.join("report.csv");
    let text = ok(&[
        "eval", "--model", s(&t.model), "--svm", s(&t.svm), "--manifest", s(&t.corpus.test_manifest), "--roc",
        s(&roc), "--csv", s(&csv),
    ]);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("Method"));
    assert!(lines[1].starts_with(facedet_cli::CASCADE_ROW));
    assert!(lines[2].starts_with(facedet_cli::VALIDATED_ROW));
    assert!(lines[3].starts_with("gamma_fa "));
    let report = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(report.lines().next(), Some("method,hits,misses,false_positives,detection_rate"));
    assert_eq!(report.lines().count(), 3);
    let curve = std::fs::read_to_string(&roc).unwrap();
    assert_eq!(curve.lines().next(), Some("threshold,tpr,fp_per_image"));
    assert!(curve.lines().count() >= 3);
}

#[test]
fn eval_without_svm_has_only_the_cascade_row() {
    let t = trained();
    let text = ok(&["eval", "--model", s(&t.model), "--manifest", s(&t.corpus.test_manifest)]);
    assert!(!text.contains(facedet_cli::VALIDATED_ROW));
    assert_eq!(text.lines().filter(|l| l.starts_with("gamma_fa")).count(), 1);
}

#[test]
fn same_config_through_file_and_flags() {
    let t = trained();
    let dir = scratch("config");
    let cfg = dir.join("settings.conf");
    std::fs::write(&cfg, "# grouping\nmin_neighbors = 1\noverlap = 0.4\n").unwrap();
    let img = &test_images(t)[0];
    let from_file = ok(&["--config", s(&cfg), "detect", "--model", s(&t.model), s(img)]);
    let from_flags = ok(&["--min-neighbors", "1", "--overlap", "0.4", "detect", "--model", s(&t.model), s(img)]);
    assert_eq!(from_file, from_flags);
    let overridden = ok(&["--config", s(&cfg), "--min-neighbors", "4", "--overlap", "0.6", "detect", "--model", s(&t.model), s(img)]);
    assert_eq!(overridden, ok(&["detect", "--model", s(&t.model), s(img)]));
}

#[test]
fn threads_flag_does_not_change_results() {
    let t = trained();
    let m = s(&t.corpus.test_manifest);
    let one = ok(&["--threads", "1", "eval", "--model", s(&t.model), "--svm", s(&t.svm), "--manifest", m]);
    let two = ok(&["--threads", "2", "eval", "--model", s(&t.model), "--svm", s(&t.svm), "--manifest", m]);
    assert_eq!(one, two);
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        vec!["frobnicate"],
        vec!["detect"],
        vec!["--overlap", "2.0", "segment", "a.ppm", "b.pgm"],
        vec!["--stages", "many", "segment", "a.ppm", "b.pgm"],
        vec!["--threads", "0", "segment", "a.ppm", "b.pgm"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(facedet_cli::EXIT_USAGE), "{args:?}");
    }
}

#[test]
fn bad_config_file_is_a_data_error() {
    let dir = scratch("bad_config");
    let cfg = dir.join("bad.conf");
    std::fs::write(&cfg, "overlap = 0.5\nwarp_speed = 9\n").unwrap();
    let out = run(&["--config", s(&cfg), "segment", "a.ppm", "b.pgm"]);
    assert_eq!(out.status.code(), Some(facedet_cli::EXIT_DATA));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2:") && err.contains("warp_speed"), "{err}");
}

#[test]
fn help_lists_every_setting() {
    let help = ok(&["--help"]);
    for key in facedet::config::KEYS {
        let flag = format!("--{}", key.replace('_', "-"));
        assert!(help.contains(&flag), "{flag} missing from help");
    }
    for sub in ["segment", "train", "detect", "eval", "roc"] {
        assert!(help.contains(sub));
    }
}

