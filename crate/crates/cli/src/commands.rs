use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use eigenseg::localize::{best_iou, BoundingBox};
use eigenseg::pipeline::{localize_image, matte_image, segment_image, semseg_dataset, PipelineConfig, SemsegInput};
use eigenseg::segment::miou;
use eigenseg::semseg::{evaluate_semseg, export_pseudo_labels, DescriptorMode, SegmentMap, SemsegEvaluation};
use eigenseg::tensor_io::{png, read_feature_map_file, FeatureMap, ImageBuffer};
use rayon::prelude::*;
use serde::Serialize;

use crate::gt::{convert_voc_dir, read_gt_boxes, read_predictions, Prediction};
use crate::{CliError, InputArgs, PipelineArgs};

pub fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(eigenseg::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn configure_threads(args: &PipelineArgs) -> Result<(), CliError> {
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(CliError::Input("--jobs must be positive".into()));
        }
        // Fails only if a pool already exists, in which case keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    Ok(())
}

struct Item {
    id: String,
    image: Option<ImageBuffer>,
    features: FeatureMap,
}

/// Load every image that has a feature file. With `--images`, the image
/// directory lists the dataset and ids without features are skipped;
/// otherwise the feature directory does.
fn load_items(input: &InputArgs, need_images: bool) -> Result<(Vec<Item>, Vec<String>), CliError> {
    if need_images && input.images.is_none() {
        return Err(CliError::Input("this command needs --images".into()));
    }
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    match &input.images {
        Some(dir) => {
            for path in sorted_files(dir, "png")? {
                let id = stem(&path);
                let feats = input.features.join(format!("{id}.dsft"));
                if !feats.exists() {
                    eprintln!("warning: no features for {id}; skipped");
                    skipped.push(id);
                    continue;
                }
                items.push(Item { image: Some(png::read_rgb(&path)?), features: read_feature_map_file(&feats)?, id });
            }
        }
        None => {
            for path in sorted_files(&input.features, "dsft")? {
                items.push(Item { id: stem(&path), image: None, features: read_feature_map_file(&path)? });
            }
        }
    }
    fs::create_dir_all(&input.out)?;
    Ok((items, skipped))
}

#[derive(Debug, Serialize)]
struct FailureEntry {
    image_id: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct ImageScore {
    image_id: String,
    score: f64,
}

fn failure_error(failures: &[FailureEntry]) -> Result<(), CliError> {
    if failures.is_empty() {
        return Ok(());
    }
    for f in failures {
        eprintln!("error: {}: {}", f.image_id, f.error);
    }
    Err(CliError::Failure(format!("{} image(s) failed", failures.len())))
}

#[derive(Debug, Serialize)]
struct LocalizeReport {
    config: PipelineConfig,
    images: usize,
    skipped: Vec<String>,
    failures: Vec<FailureEntry>,
    per_image: Vec<ImageScore>,
    /// `None` when no image has both a prediction and ground truth.
    corloc: Option<f64>,
}

pub fn localize(input: &InputArgs, args: &PipelineArgs, gt: Option<&Path>) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    configure_threads(args)?;
    let gt = gt.map(read_gt_boxes).transpose()?;
    let (items, skipped) = load_items(input, false)?;
    let results: Vec<_> =
        items.par_iter().map(|it| localize_image(it.image.as_ref(), &it.features, &cfg).map(|l| l.bbox)).collect();

    let mut lines = fs::File::create(input.out.join("predictions.jsonl"))?;
    let mut failures = Vec::new();
    let mut per_image = Vec::new();
    for (it, res) in items.iter().zip(results) {
        let bbox: Option<BoundingBox> = match res {
            Ok(b) => {
                writeln!(
                    lines,
                    "{}",
                    serde_json::to_string(&Prediction::new(&it.id, &b)).map_err(eigenseg::Error::from)?
                )?;
                Some(b)
            }
            Err(e) => {
                failures.push(FailureEntry { image_id: it.id.clone(), error: e.to_string() });
                None
            }
        };
        // A failed image counts as a miss when it has ground truth.
        if let Some(boxes) = gt.as_ref().and_then(|g| g.get(&it.id)) {
            per_image.push(ImageScore { image_id: it.id.clone(), score: bbox.map_or(0.0, |b| best_iou(&b, boxes)) });
        }
    }
    if gt.is_some() {
        let corloc = (!per_image.is_empty())
            .then(|| per_image.iter().filter(|s| s.score > 0.5).count() as f64 / per_image.len() as f64);
        if let Some(c) = corloc {
            println!("CorLoc {c:.4} over {} images", per_image.len());
        }
        let report = LocalizeReport { config: cfg, images: items.len(), skipped, failures, per_image, corloc };
        write_json(&input.out.join("report.json"), &report)?;
        return failure_error(&report.failures);
    }
    failure_error(&failures)
}

#[derive(Debug, Serialize)]
struct SegmentReport {
    config: PipelineConfig,
    images: usize,
    skipped: Vec<String>,
    failures: Vec<FailureEntry>,
    per_image: Vec<ImageScore>,
    /// Mean per-image foreground/background mIoU.
    miou: Option<f64>,
}

pub fn segment(input: &InputArgs, args: &PipelineArgs, gt: Option<&Path>) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    configure_threads(args)?;
    let (items, skipped) = load_items(input, true)?;
    let results: Vec<_> = items
        .par_iter()
        .map(|it| segment_image(it.image.as_ref().expect("images loaded"), &it.features, &cfg))
        .collect();
    let mut failures = Vec::new();
    let mut per_image = Vec::new();
    for (it, res) in items.iter().zip(results) {
        let mask = match res {
            Ok(m) => m,
            Err(e) => {
                failures.push(FailureEntry { image_id: it.id.clone(), error: e.to_string() });
                continue;
            }
        };
        let gray: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
        png::write_gray(mask.rows(), mask.cols(), &gray, input.out.join(format!("{}.png", it.id)))?;
        if let Some(dir) = gt {
            let path = dir.join(format!("{}.png", it.id));
            if !path.exists() {
                continue;
            }
            let (rows, cols, values) = png::read_gray(&path)?;
            let gt_map = SegmentMap::new(rows, cols, values.iter().map(|&v| (v > 0) as u32).collect())?;
            let pred = SegmentMap::new(mask.rows(), mask.cols(), mask.bits().iter().map(|&b| b as u32).collect())?;
            per_image.push(ImageScore { image_id: it.id.clone(), score: miou(&pred, &gt_map, 2)? });
        }
    }
    if gt.is_some() {
        let miou =
            (!per_image.is_empty()).then(|| per_image.iter().map(|s| s.score).sum::<f64>() / per_image.len() as f64);
        if let Some(m) = miou {
            println!("mIoU {m:.4} over {} images", per_image.len());
        }
        let report = SegmentReport { config: cfg, images: items.len(), skipped, failures, per_image, miou };
        write_json(&input.out.join("report.json"), &report)?;
        return failure_error(&report.failures);
    }
    failure_error(&failures)
}

#[derive(Debug, Serialize)]
struct SemsegReport {
    config: PipelineConfig,
    images: usize,
    skipped: Vec<String>,
    descriptors: usize,
    inertia: f64,
    manifest: PathBuf,
    evaluation: Option<SemsegEvaluation>,
}

pub fn semseg(
    input: &InputArgs,
    args: &PipelineArgs,
    gt: Option<&Path>,
    classes: Option<usize>,
    descriptors: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    configure_threads(args)?;
    let (items, skipped) = load_items(input, false)?;
    let inputs: Vec<SemsegInput> =
        items.into_iter().map(|it| SemsegInput { image_id: it.id, image: it.image, features: it.features }).collect();
    let mode = descriptors.map_or(DescriptorMode::MeanPool, DescriptorMode::External);
    let out = semseg_dataset(&inputs, &cfg, &mode)?;
    let manifest = export_pseudo_labels(&input.out.join("labels"), &out.semantic)?;

    let evaluation = match gt {
        Some(dir) => {
            let mut preds = Vec::new();
            let mut gts = Vec::new();
            for (id, map) in &out.semantic {
                let path = dir.join(format!("{id}.png"));
                if path.exists() {
                    preds.push(map.clone());
                    gts.push(png::read_label_map(&path)?);
                }
            }
            if preds.is_empty() {
                None
            } else {
                let e = evaluate_semseg(&preds, &gts, classes.unwrap_or(cfg.dataset_k + 1))?;
                println!("matched mIoU {:.4} over {} images", e.miou, preds.len());
                Some(e)
            }
        }
        None => None,
    };
    let report = SemsegReport {
        config: cfg,
        images: inputs.len(),
        skipped,
        descriptors: out.clustering.ids.len(),
        inertia: out.clustering.model.inertia,
        manifest,
        evaluation,
    };
    write_json(&input.out.join("report.json"), &report)
}

pub fn matte(
    input: &InputArgs,
    args: &PipelineArgs,
    background: Option<&Path>,
    sample_rate: Option<f64>,
) -> Result<(), CliError> {
    let mut cfg = args.resolve()?;
    if let Some(r) = sample_rate {
        cfg.matte_sample_rate = r;
    }
    configure_threads(args)?;
    let bg = background.map(png::read_rgb).transpose()?;
    let (items, _) = load_items(input, true)?;
    let mut failures = Vec::new();
    // Each matte already parallelizes internally; images run in sequence
    // to bound memory.
    for it in &items {
        let (image, matte) = match matte_image(it.image.as_ref().expect("images loaded"), &it.features, &cfg) {
            Ok(r) => r,
            Err(e) => {
                failures.push(FailureEntry { image_id: it.id.clone(), error: e.to_string() });
                continue;
            }
        };
        png::write_gray16(matte.rows(), matte.cols(), matte.alpha(), input.out.join(format!("{}.matte.png", it.id)))?;
        if let Some(bg) = &bg {
            let bg = bg.resized(image.height(), image.width())?;
            let comp = eigenseg::matting::composite(&image, &matte, &bg)?;
            png::write_rgb(&comp, input.out.join(format!("{}.composite.png", it.id)))?;
        }
    }
    failure_error(&failures)
}

#[derive(Debug, Serialize)]
struct CorlocReport {
    per_image: Vec<ImageScore>,
    missing_predictions: Vec<String>,
    corloc: Option<f64>,
}

/// Images with ground truth but no prediction count as misses.
pub fn eval_corloc(predictions: &Path, gt: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let preds = read_predictions(predictions)?;
    let gt = read_gt_boxes(gt)?;
    let by_id: BTreeMap<&str, &Prediction> = preds.iter().map(|p| (p.image_id.as_str(), p)).collect();
    let mut per_image = Vec::new();
    let mut missing = Vec::new();
    for (id, boxes) in &gt {
        let score = match by_id.get(id.as_str()) {
            Some(p) => best_iou(&p.bbox()?, boxes),
            None => {
                missing.push(id.clone());
                0.0
            }
        };
        per_image.push(ImageScore { image_id: id.clone(), score });
    }
    let corloc = (!per_image.is_empty())
        .then(|| per_image.iter().filter(|s| s.score > 0.5).count() as f64 / per_image.len() as f64);
    let report = CorlocReport { per_image, missing_predictions: missing, corloc };
    println!("{}", serde_json::to_string_pretty(&report).map_err(eigenseg::Error::from)?);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MiouReport {
    images: usize,
    /// Mean per-image mIoU, or the dataset matched mIoU with `--matched`.
    miou: f64,
    evaluation: Option<SemsegEvaluation>,
}

pub fn eval_miou(pred: &Path, gt: &Path, classes: usize, matched: bool, out: Option<&Path>) -> Result<(), CliError> {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for path in sorted_files(pred, "png")? {
        let gt_path = gt.join(path.file_name().expect("listed files have names"));
        if gt_path.exists() {
            preds.push(png::read_label_map(&path)?);
            gts.push(png::read_label_map(&gt_path)?);
        }
    }
    if preds.is_empty() {
        return Err(CliError::Failure("no prediction has a matching ground-truth file".into()));
    }
    let report = if matched {
        let e = evaluate_semseg(&preds, &gts, classes)?;
        MiouReport { images: preds.len(), miou: e.miou, evaluation: Some(e) }
    } else {
        let scores = preds.iter().zip(&gts).map(|(p, g)| miou(p, g, classes)).collect::<Result<Vec<_>, _>>()?;
        MiouReport { images: preds.len(), miou: scores.iter().sum::<f64>() / scores.len() as f64, evaluation: None }
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(eigenseg::Error::from)?);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(())
}

pub fn convert_gt(annotations: &Path, out: &Path) -> Result<(), CliError> {
    let boxes = convert_voc_dir(annotations)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_json(out, &boxes)?;
    eprintln!("converted {} annotations", boxes.len());
    Ok(())
}
