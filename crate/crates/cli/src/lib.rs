//! `facedet` command-line front end. [`run`] is the whole program; the
//! binary only forwards the process arguments and exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};
use rayon::prelude::*;

use facedet::config::{PipelineConfig, KEYS};
use facedet::eval::{
    emit_report, emit_report_csv, load_manifest, match_corpus, roc_sweep, score_thresholds, DetectionReport,
    MatchCounts,
};
use facedet::exlbp::LinearSvmModel;
use facedet::haar::{train_cascade_with, Cascade, Detection};
use facedet::image::pnm::{self, PnmImage};
use facedet::image::{downscale, RgbImage};
use facedet::pipeline::{preprocess_gray, segment_skin, train_validator, DetectOutput, Detector};
use facedet::skin::{default_min_area, extract_regions, skin_ratio};
use facedet::Rect;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub const CASCADE_ROW: &str = "Adaboost Cascade";
pub const VALIDATED_ROW: &str = "Proposed method";

enum Failure {
    Usage(String),
    Data(String),
}

impl From<facedet::Error> for Failure {
    fn from(e: facedet::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn key_help(key: &str) -> &'static str {
    match key {
        "downscale" => "Keep every n-th pixel before processing",
        "median_radius" => "Median filter radius, 0 to disable",
        "equalize" => "Histogram-equalise the grayscale image",
        "cb_min" => "Lowest skin Cb value",
        "cb_max" => "Highest skin Cb value",
        "cr_min" => "Lowest skin Cr value",
        "cr_max" => "Highest skin Cr value",
        "sobel_threshold" => "Edge magnitude that cuts skin regions",
        "skin_gating" => "Only scan windows on skin-coloured regions",
        "stages" => "Cascade stages to train",
        "target_dr" => "Detection rate each stage must keep",
        "max_fpr" => "False-positive rate at which a stage is complete",
        "max_stumps" => "Most weak classifiers per stage",
        "base_window" => "Training window side in pixels",
        "max_features" => "Random subset of the Haar feature bank, or `all`",
        "mining_attempts" => "Window draws per missing negative when mining",
        "seed" => "Seed for every random choice",
        "scale_factor" => "Window growth between scan scales",
        "step" => "Window step at the base scale",
        "min_skin_fraction" => "Skin fraction a window needs with gating on",
        "min_neighbors" => "Raw detections a group needs to be reported",
        "overlap" => "IoU that joins raw detections into one group",
        "svm_threshold" => "Decision value a candidate needs to pass validation",
        "block_weights" => "Nine comma-separated weights for the fine LBP blocks",
        "svm_reg" => "SVM L2 regularisation strength",
        "svm_epochs" => "SVM training passes",
        "iou" => "Overlap that counts a detection as a hit",
        _ => "",
    }
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn model_args(cmd: Command) -> Command {
    cmd.arg(
        Arg::new("model")
            .long("model")
            .value_name("PATH")
            .required(true)
            .value_parser(clap::value_parser!(PathBuf))
            .help("Cascade model file"),
    )
    .arg(
        Arg::new("svm")
            .long("svm")
            .value_name("PATH")
            .value_parser(clap::value_parser!(PathBuf))
            .help("Validation SVM file; omit for cascade-only detection"),
    )
}

fn path_arg(name: &'static str, long: bool, help: &'static str) -> Arg {
    let a = Arg::new(name)
        .value_name("PATH")
        .value_parser(clap::value_parser!(PathBuf))
        .help(help);
    if long {
        a.long(name)
    } else {
        a.required(true)
    }
}

pub fn command() -> Command {
    let defaults = PipelineConfig::default();
    let mut cmd = Command::new("facedet")
        .about("Skin-gated Haar cascade face detector with ExLBP validation")
        .version(clap::crate_version!())
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(path_arg("config", true, "Settings file of `key = value` lines").global(true))
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .global(true)
                .value_parser(clap::value_parser!(u16).range(1..))
                .help("Worker threads (default: all cores)"),
        );
    for key in KEYS {
        let default = defaults.get(key).expect("listed key");
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .global(true)
                .default_value(default)
                .help(key_help(key)),
        );
    }
    cmd.subcommand(
        Command::new("segment")
            .about("Write the refined skin mask of a colour image")
            .arg(path_arg("input", false, "Input PPM image"))
            .arg(path_arg("output", false, "Output mask PGM")),
    )
    .subcommand(
        Command::new("train")
            .about("Train a cascade, and optionally the validation SVM")
            .arg(path_arg("pos", true, "Directory of positive base-window PGM samples").required(true))
            .arg(path_arg("neg", true, "Directory of negative base-window PGM samples").required(true))
            .arg(path_arg("pool", true, "Directory of face-free images to mine negatives from"))
            .arg(path_arg("out", true, "Cascade model output").required(true))
            .arg(path_arg("svm-out", true, "Also train the validation SVM and write it here")),
    )
    .subcommand(
        model_args(Command::new("detect").about("Detect faces in one image"))
            .arg(path_arg("image", false, "Input PGM or PPM image"))
            .arg(path_arg("out", true, "Write detections here instead of stdout"))
            .arg(path_arg("annotate", true, "Write a PPM copy with detections drawn in red"))
            .arg(
                Arg::new("no-validate")
                    .long("no-validate")
                    .action(ArgAction::SetTrue)
                    .help("Skip SVM validation even when --svm is given"),
            ),
    )
    .subcommand(
        model_args(Command::new("eval").about("Score cascade-only and validated detection on a manifest"))
            .arg(path_arg("manifest", true, "Manifest of images and face boxes").required(true))
            .arg(path_arg("roc", true, "Write the ROC curve of the final detections"))
            .arg(path_arg("csv", true, "Write the report as CSV")),
    )
    .subcommand(
        model_args(Command::new("roc").about("Sweep the detection score threshold over a manifest"))
            .arg(path_arg("manifest", true, "Manifest of images and face boxes").required(true))
            .arg(path_arg("out", true, "ROC CSV output").required(true))
            .arg(
                Arg::new("no-validate")
                    .long("no-validate")
                    .action(ArgAction::SetTrue)
                    .help("Sweep cascade-only detections"),
            ),
    )
}

fn resolve_config(m: &ArgMatches) -> Result<PipelineConfig, Failure> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for key in KEYS {
        if m.value_source(key) == Some(ValueSource::CommandLine) {
            let v = m.get_one::<String>(key).expect("flag has a value");
            cfg.set(key, v)
                .map_err(|e| Failure::Usage(format!("--{}: {e}", flag_name(key))))?;
        }
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Runs the program on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = dispatch(&matches, out, err);
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DATA
        }
    }
}

fn dispatch(m: &ArgMatches, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let cfg = resolve_config(m)?;
    let (name, sub) = m.subcommand().expect("subcommand required");
    // commands write into buffers so they can run inside a sized pool
    let mut obuf: Vec<u8> = Vec::new();
    let mut ebuf: Vec<u8> = Vec::new();
    let mut work = || match name {
        "segment" => cmd_segment(sub, &cfg, &mut obuf),
        "train" => cmd_train(sub, &cfg, &mut obuf),
        "detect" => cmd_detect(sub, &cfg, &mut obuf, &mut ebuf),
        "eval" => cmd_eval(sub, &cfg, &mut obuf),
        "roc" => cmd_roc(sub, &cfg, &mut obuf),
        _ => unreachable!("unknown subcommand"),
    };
    let result = match m.get_one::<u16>("threads") {
        Some(&n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build()
                .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
            pool.install(work)
        }
        None => work(),
    };
    emit(out, &String::from_utf8_lossy(&obuf))?;
    let _ = err.write_all(&ebuf);
    result
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    std::fs::write(path, bytes).map_err(|e| io_fail(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Data(format!("writing output: {e}")))
}

fn path<'a>(m: &'a ArgMatches, name: &str) -> Option<&'a PathBuf> {
    m.get_one::<PathBuf>(name)
}

fn cmd_segment(m: &ArgMatches, cfg: &PipelineConfig, out: &mut dyn Write) -> CmdResult {
    let input = path(m, "input").expect("required");
    let rgb = match pnm::read(input)? {
        PnmImage::Rgb(rgb) => rgb,
        PnmImage::Gray(_) => {
            return Err(Failure::Data(format!(
                "{}: skin segmentation needs a colour (P6) image",
                input.display()
            )))
        }
    };
    let small = rgb.downscale(cfg.preprocess.downscale)?;
    let mask = segment_skin(&small, cfg)?;
    mask.write_pgm(path(m, "output").expect("required"))?;
    let regions = extract_regions(&mask, default_min_area(mask.width(), mask.height()))?;
    emit(
        out,
        &format!("skin_ratio {:.2} regions {}\n", skin_ratio(&mask), regions.len()),
    )
}

/// Image files of a directory in name order.
fn list_images(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_fail(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| io_fail(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("pgm" | "ppm" | "pnm")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn read_dir_gray(dir: &Path, what: &str) -> Result<Vec<facedet::image::GrayImage>, Failure> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Failure::Data(format!("{}: no {what} images", dir.display())));
    }
    files
        .par_iter()
        .map(|f| pnm::read_gray(f).map_err(Failure::from))
        .collect()
}

fn cmd_train(m: &ArgMatches, cfg: &PipelineConfig, out: &mut dyn Write) -> CmdResult {
    let pos = read_dir_gray(path(m, "pos").expect("required"), "positive")?;
    let neg = read_dir_gray(path(m, "neg").expect("required"), "negative")?;
    let pool = match path(m, "pool") {
        Some(dir) => {
            let raw = read_dir_gray(dir, "background")?;
            let pre: Vec<_> = raw
                .par_iter()
                .map(|g| {
                    let small = downscale(g, cfg.preprocess.downscale)?;
                    preprocess_gray(&small, &cfg.preprocess)
                })
                .collect::<facedet::Result<_>>()?;
            Some(pre)
        }
        None => None,
    };
    let mut lines = String::new();
    let cascade = train_cascade_with(&pos, &neg, pool.as_deref(), &cfg.cascade, |i, s| {
        lines.push_str(&format!(
            "stage {} dr {:.4} fpr {:.4} positives {} negatives {}\n",
            i + 1,
            s.detection_rate,
            s.false_positive_rate,
            s.positives,
            s.negatives
        ));
    })?;
    let model = path(m, "out").expect("required");
    cascade.save(model)?;
    lines.push_str(&format!("wrote {} stages to {}\n", cascade.stages.len(), model.display()));
    if let Some(svm_out) = path(m, "svm-out") {
        let svm = train_validator(&cascade, &pos, &neg, pool.as_deref().unwrap_or(&[]), cfg)?;
        svm.save(svm_out)?;
        lines.push_str(&format!("wrote validation svm to {}\n", svm_out.display()));
    }
    emit(out, &lines)
}

struct Models {
    cascade: Cascade,
    svm: Option<LinearSvmModel>,
}

fn load_models(m: &ArgMatches, validate: bool) -> Result<Models, Failure> {
    let cascade = Cascade::load(path(m, "model").expect("required"))?;
    let svm = match path(m, "svm") {
        Some(p) if validate => Some(LinearSvmModel::load(p)?),
        _ => None,
    };
    Ok(Models { cascade, svm })
}

pub fn format_detections(dets: &[Detection]) -> String {
    dets.iter()
        .map(|d| format!("{} {} {} {} {:.6}\n", d.rect.x, d.rect.y, d.rect.w, d.rect.h, d.score))
        .collect()
}

fn cmd_detect(m: &ArgMatches, cfg: &PipelineConfig, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let models = load_models(m, !m.get_flag("no-validate"))?;
    let image_path = path(m, "image").expect("required");
    let img = pnm::read(image_path)?;
    let detector = Detector {
        cascade: &models.cascade,
        svm: models.svm.as_ref(),
        cfg,
    };
    let result = detector.detect(&img)?;
    let dets = result.detections();
    let text = format_detections(dets);
    match path(m, "out") {
        Some(p) => write_file(p, text.as_bytes())?,
        None => emit(out, &text)?,
    }
    let _ = writeln!(
        err,
        "windows_total {} windows_evaluated {} candidates {} kept {}",
        result.stats.windows_total,
        result.stats.windows_evaluated,
        result.candidates.len(),
        dets.len()
    );
    if let Some(p) = path(m, "annotate") {
        let mut canvas = match &img {
            PnmImage::Rgb(rgb) => rgb.clone(),
            PnmImage::Gray(g) => RgbImage::from_gray(g),
        };
        for d in dets {
            canvas.draw_rect(d.rect, [255, 0, 0]);
        }
        pnm::write_ppm(p, &canvas)?;
    }
    Ok(())
}

struct CorpusRun {
    /// (cascade-only, final) detections with truth boxes, per image.
    cascade: Vec<(Vec<Detection>, Vec<Rect>)>,
    validated: Option<Vec<(Vec<Detection>, Vec<Rect>)>>,
    total_windows: usize,
}

fn run_corpus(models: &Models, manifest: &Path, cfg: &PipelineConfig) -> Result<CorpusRun, Failure> {
    let manifest = load_manifest(manifest)?;
    let detector = Detector {
        cascade: &models.cascade,
        svm: models.svm.as_ref(),
        cfg,
    };
    let outputs: Vec<(DetectOutput, Vec<Rect>)> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let img = pnm::read(&e.path)?;
            Ok((detector.detect(&img)?, e.faces.clone()))
        })
        .collect::<facedet::Result<_>>()?;
    let total_windows = outputs.iter().map(|(o, _)| o.stats.windows_total).sum();
    let cascade = outputs.iter().map(|(o, t)| (o.candidates.clone(), t.clone())).collect();
    let validated = models.svm.as_ref().map(|_| {
        outputs
            .iter()
            .map(|(o, t)| (o.validated.clone().unwrap_or_default(), t.clone()))
            .collect()
    });
    Ok(CorpusRun {
        cascade,
        validated,
        total_windows,
    })
}

fn cmd_eval(m: &ArgMatches, cfg: &PipelineConfig, out: &mut dyn Write) -> CmdResult {
    let models = load_models(m, true)?;
    let run = run_corpus(&models, path(m, "manifest").expect("required"), cfg)?;
    let mut rows = Vec::new();
    let mut gammas = String::new();
    let sets = std::iter::once((CASCADE_ROW, &run.cascade)).chain(run.validated.as_ref().map(|v| (VALIDATED_ROW, v)));
    for (name, set) in sets.clone() {
        let counts: MatchCounts = match_corpus(set, cfg.iou)?;
        let report = DetectionReport::new(counts, run.total_windows)?;
        rows.push(report.row(name));
        gammas.push_str(&format!(
            "gamma_fa {name}: {:.6e} ({} of {} windows)\n",
            report.gamma_fa.unwrap_or(0.0),
            report.false_positives,
            report.total_windows
        ));
    }
    emit(out, &emit_report(&rows)?)?;
    emit(out, &gammas)?;
    if let Some(p) = path(m, "csv") {
        write_file(p, emit_report_csv(&rows)?.as_bytes())?;
    }
    if let Some(p) = path(m, "roc") {
        let (_, finals) = sets.last().expect("at least the cascade row");
        let curve = roc_sweep(finals, &score_thresholds(finals), cfg.iou)?;
        curve.save(p)?;
    }
    Ok(())
}

fn cmd_roc(m: &ArgMatches, cfg: &PipelineConfig, out: &mut dyn Write) -> CmdResult {
    let models = load_models(m, !m.get_flag("no-validate"))?;
    let run = run_corpus(&models, path(m, "manifest").expect("required"), cfg)?;
    let set = run.validated.as_ref().unwrap_or(&run.cascade);
    let curve = roc_sweep(set, &score_thresholds(set), cfg.iou)?;
    let p = path(m, "out").expect("required");
    curve.save(p)?;
    emit(out, &format!("wrote {} roc points to {}\n", curve.points.len(), p.display()))
}
