//! Dataset-level drivers behind the `nbbox` binary: augment a directory of
//! DOTA annotations, evaluate detections, and run the detector-free analyses.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nbbox_core::analysis::{discrepancy_report, noise_sweep, DiscrepancyStats, SweepResult};
use nbbox_core::annotations::{
    category_from_detection_filename, read_dota_annotations, read_dota_detections, write_dota_annotations, AnnotationFile, DetectionRecord,
};
use nbbox_core::eval::{evaluate, ApMode, EvalReport};
use nbbox_core::geometry::{convex_intersection, min_area_rect, obb_to_polygon, ConvexPolygon, OrientedBox, Point2};
use nbbox_core::rng::RngStream;
use nbbox_core::transform::{nbbox_apply_traced, AnnotationRecord, NoiseConfig};
use rayon::prelude::*;
use serde::Deserialize;

/// Every `.txt` file under `dir`, sorted by path.
pub fn list_txt_files(dir: &Path) -> Result<Vec<PathBuf>> {
    ensure!(dir.is_dir(), "{} is not a readable directory", dir.display());
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).follow_links(true) {
        let entry = entry.with_context(|| format!("walking {}", dir.display()))?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "txt") {
            out.push(entry.into_path());
        }
    }
    out.sort();
    Ok(out)
}

/// Loads a noise configuration file, or the built-in default when `path` is `None`.
pub fn load_config(path: Option<&Path>) -> Result<NoiseConfig> {
    match path {
        None => Ok(NoiseConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            NoiseConfig::from_toml_str(&text).with_context(|| format!("config {}", p.display()))
        }
    }
}

/// Substream label for one annotation file: its base name, with the epoch tag
/// appended after a NUL separator when non-empty.
pub fn augment_label(file_name: &str, epoch_tag: &str) -> String {
    if epoch_tag.is_empty() {
        file_name.to_string()
    } else {
        format!("{file_name}\0{epoch_tag}")
    }
}

#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub ann_dir: PathBuf,
    pub out_dir: PathBuf,
    pub config: NoiseConfig,
    pub seed: u64,
    pub epoch_tag: String,
    /// Image size `(W, H)` to clip noised boxes against.
    pub clip: Option<(f64, f64)>,
    /// Worker threads; `None` lets the pool decide.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentSummary {
    pub files: usize,
    pub records: usize,
    pub gated: usize,
    pub failures: Vec<(PathBuf, String)>,
}

impl AugmentSummary {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for AugmentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} files, {} records, {} gated", self.files, self.records, self.gated)?;
        if !self.failures.is_empty() {
            write!(f, ", {} failed", self.failures.len())?;
        }
        Ok(())
    }
}

fn image_rect(w: f64, h: f64) -> ConvexPolygon<f64> {
    ConvexPolygon::new(vec![Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)]).expect("positive image size")
}

/// Replaces `b` by the minimum rectangle around its part inside `image`.
fn clip_box(b: &OrientedBox<f64>, image: &ConvexPolygon<f64>) -> Option<OrientedBox<f64>> {
    let poly = obb_to_polygon(b).ok()?;
    let inside = convex_intersection(&poly, image)?;
    min_area_rect(inside.vertices()).ok()
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).with_context(|| format!("temp file in {}", parent.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn augment_one(path: &Path, opts: &AugmentOptions, root: &RngStream) -> Result<(usize, usize)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).context("file name is not UTF-8")?;
    let stem = name.strip_suffix(".txt").unwrap_or(name);
    let mut file = read_dota_annotations(&text, stem).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;

    let records = file.records();
    let mut rng = root.substream(augment_label(name, &opts.epoch_tag));
    let mut out = nbbox_apply_traced(&records, &opts.config, &mut rng).with_context(|| path.display().to_string())?;
    if let Some((w, h)) = opts.clip {
        let image = image_rect(w, h);
        for (rec, gated) in out.records.iter_mut().zip(&out.gated) {
            if *gated {
                continue;
            }
            match clip_box(&rec.bbox, &image) {
                Some(b) => rec.bbox = b,
                None => log::warn!("{}: box {:?} lies outside the {w}x{h} image; left unclipped", path.display(), rec.bbox),
            }
        }
    }
    let gated = out.gated_count();
    let n = out.records.len();
    file.set_records(out.records);

    let rel = path.strip_prefix(&opts.ann_dir).unwrap_or(Path::new(name));
    write_atomic(&opts.out_dir.join(rel), &write_dota_annotations(&file))?;
    Ok((n, gated))
}

/// Noises every annotation file under `ann_dir` into the same relative path
/// under `out_dir`. Per-file failures are collected, not fatal.
pub fn run_augment(opts: &AugmentOptions) -> Result<AugmentSummary> {
    opts.config.validate()?;
    if let Some((w, h)) = opts.clip {
        ensure!(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite(), "--clip needs a positive image size, got {w}x{h}");
    }
    let files = list_txt_files(&opts.ann_dir)?;
    fs::create_dir_all(&opts.out_dir).with_context(|| format!("creating {}", opts.out_dir.display()))?;
    let root = RngStream::new(opts.seed);

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build()?;
    let results: Vec<Result<(usize, usize)>> = pool.install(|| files.par_iter().map(|p| augment_one(p, opts, &root)).collect());

    let mut summary = AugmentSummary { files: files.len(), ..Default::default() };
    for (path, res) in files.iter().zip(results) {
        match res {
            Ok((n, g)) => {
                summary.records += n;
                summary.gated += g;
            }
            Err(e) => {
                log::error!("{e:#}");
                summary.failures.push((path.clone(), format!("{e:#}")));
            }
        }
    }
    Ok(summary)
}

/// Reads every annotation file under `dir`, keyed by file stem.
pub fn load_annotations(dir: &Path) -> Result<Vec<AnnotationFile>> {
    let mut out = Vec::new();
    for path in list_txt_files(dir)? {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).context("file name is not UTF-8")?;
        out.push(read_dota_annotations(&text, stem).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?);
    }
    Ok(out)
}

/// Reads every per-category detection file under `dir`.
pub fn load_detections(dir: &Path) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for path in list_txt_files(dir)? {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_name().and_then(|s| s.to_str()).context("file name is not UTF-8")?;
        let single = BTreeMap::from([(category_from_detection_filename(name), text)]);
        out.extend(read_dota_detections(&single).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?);
    }
    Ok(out)
}

pub fn run_eval(ann_dir: &Path, det_dir: &Path, iou_threshold: f64, mode: ApMode) -> Result<EvalReport> {
    ensure!((0.0..=1.0).contains(&iou_threshold), "IoU threshold must lie in [0, 1], got {iou_threshold}");
    let gts: BTreeMap<String, Vec<AnnotationRecord<f64>>> =
        load_annotations(ann_dir)?.into_iter().map(|f| (f.image_id.clone(), f.records())).collect();
    let dets = load_detections(det_dir)?;
    Ok(evaluate(&dets, &gts, iou_threshold, mode))
}

/// Plain-text per-class table ending in the mAP line.
pub fn format_eval_table(report: &EvalReport) -> String {
    let width = report.per_class.keys().map(String::len).max().unwrap_or(0).max(5);
    let mut s = format!("{:<width$}  {:>7}  {:>6}  {:>6}  {:>6}  {:>6}\n", "class", "AP", "gt", "det", "tp", "fp");
    for (class, c) in &report.per_class {
        let ap = c.ap.map_or("-".to_string(), |v| format!("{v:.4}"));
        s.push_str(&format!(
            "{class:<width$}  {ap:>7}  {:>6}  {:>6}  {:>6}  {:>6}\n",
            c.num_gt, c.num_det, c.true_positives, c.false_positives
        ));
    }
    s.push_str(&format!("mAP {:.4} (IoU {}, {})\n", report.map_score, report.iou_threshold, report.mode));
    s
}

pub fn run_analyze(ann_dir: &Path) -> Result<DiscrepancyStats> {
    Ok(discrepancy_report(&load_annotations(ann_dir)?)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    grid: Vec<NoiseConfig>,
}

/// Parses a sweep grid: `[[grid]]` tables, each a (partial) noise configuration.
pub fn parse_grid(text: &str) -> Result<Vec<NoiseConfig>> {
    let g: GridFile = toml::from_str(text)?;
    if g.grid.is_empty() {
        bail!("grid has no [[grid]] entries");
    }
    for (i, cfg) in g.grid.iter().enumerate() {
        cfg.validate().with_context(|| format!("grid entry {}", i + 1))?;
    }
    Ok(g.grid)
}

pub fn run_sweep(ann_dir: &Path, grid: &[NoiseConfig], seed: u64, trials: usize) -> Result<SweepResult> {
    Ok(noise_sweep(&load_annotations(ann_dir)?, grid, seed, trials)?)
}

const SWEEP_COLUMNS: [&str; 15] = [
    "scale_enabled",
    "s_min",
    "s_max",
    "isotropic_scale",
    "rotate_enabled",
    "r_min",
    "r_max",
    "translate_enabled",
    "t_min",
    "t_max",
    "isotropic_translate",
    "gamma",
    "mean_self_iou",
    "p05_self_iou",
    "frac_gated",
];

/// One CSV row per grid point: configuration fields then the summary columns.
pub fn sweep_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS)?;
    for p in &result.grid {
        let c = &p.config;
        w.write_record([
            c.scale_enabled.to_string(),
            c.s_min.to_string(),
            c.s_max.to_string(),
            c.isotropic_scale.to_string(),
            c.rotate_enabled.to_string(),
            c.r_min.to_string(),
            c.r_max.to_string(),
            c.translate_enabled.to_string(),
            c.t_min.to_string(),
            c.t_max.to_string(),
            c.isotropic_translate.to_string(),
            c.gamma.to_string(),
            p.mean_self_iou.to_string(),
            p.p05_self_iou.to_string(),
            p.frac_gated.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)?)
}

/// Writes `contents` to `path` atomically.
pub fn write_output(path: &Path, contents: &str) -> Result<()> {
    write_atomic(path, contents)
}
