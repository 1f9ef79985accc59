//! Batch execution over a dataset: masks, overlays, traces and reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunSettings;
use super::dataset::{DatasetManifest, Pair};
use super::diagnostics::{diagnostics, image_diagnostics, DiagnosticRow, IterationDiagnostic};
use super::io::{limit_size, load_gt, load_image, load_mask, overlay, resize_mask, save_mask};
use crate::backends::Backends;
use crate::engine::{run_cycle, Trace};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ImageMetrics, MetricReport};
use crate::promptgen::PromptTemplates;
use crate::types::{BinaryMask, DecodeMode, RasterImage, TaskConfig};

/// Runs with a larger share of failed images exit unsuccessfully.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub diagnostics: bool,
    /// Ground-truth class per image stem, for the name-similarity column.
    pub classes: Option<BTreeMap<String, String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub image: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub task: TaskConfig,
    pub trials: usize,
    pub images: usize,
    pub succeeded: usize,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Vec<DiagnosticRow>>,
}

impl RunReport {
    pub fn failure_rate(&self) -> f64 {
        if self.images == 0 {
            0.0
        } else {
            self.failures.len() as f64 / self.images as f64
        }
    }

    pub fn failed_run(&self) -> bool {
        self.failure_rate() > MAX_FAILURE_RATE
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "dataset: {}\ntask prompt: {}\nimages: {} ({} ok, {} failed)\n\n",
            self.dataset,
            self.task.generic_prompt,
            self.images,
            self.succeeded,
            self.failures.len()
        );
        match &self.metrics {
            Some(m) => out += &m.to_table(),
            None => out += "no ground truth: metrics not computed\n",
        }
        if let Some(rows) = &self.diagnostics {
            out += "\nper-iteration diagnostics\n";
            out += &super::diagnostics::to_table(rows);
        }
        if !self.failures.is_empty() {
            out += "\nerrors\n";
            for f in &self.failures {
                out += &format!("  {}: {}\n", f.image, f.error);
            }
        }
        if !self.warnings.is_empty() {
            out += "\nwarnings\n";
            for w in &self.warnings {
                out += &format!("  {w}\n");
            }
        }
        out
    }
}

struct ImageOutcome {
    stem: String,
    error: Option<String>,
    warnings: Vec<String>,
    metrics: Option<ImageMetrics>,
    diagnostics: Vec<IterationDiagnostic>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn mean_metrics(stem: &str, runs: &[ImageMetrics]) -> ImageMetrics {
    let n = runs.len() as f64;
    let fs: Vec<f64> = runs.iter().filter_map(|m| m.f_beta).collect();
    ImageMetrics {
        name: stem.to_string(),
        mae: runs.iter().map(|m| m.mae).sum::<f64>() / n,
        f_beta: (!fs.is_empty()).then(|| fs.iter().sum::<f64>() / fs.len() as f64),
        e_phi: runs.iter().map(|m| m.e_phi).sum::<f64>() / n,
        s_alpha: runs.iter().map(|m| m.s_alpha).sum::<f64>() / n,
    }
}

struct Ctx<'a> {
    settings: &'a RunSettings,
    templates: &'a PromptTemplates,
    backends: &'a Backends,
    out: &'a Path,
    options: &'a RunOptions,
}

fn process(pair: &Pair, ctx: &Ctx<'_>) -> ImageOutcome {
    let mut outcome = ImageOutcome {
        stem: pair.stem.clone(),
        error: None,
        warnings: Vec::new(),
        metrics: None,
        diagnostics: Vec::new(),
    };
    if let Err(e) = process_inner(pair, ctx, &mut outcome) {
        log::error!("{}: {e}", pair.stem);
        outcome.error = Some(e.to_string());
    }
    outcome
}

fn process_inner(pair: &Pair, ctx: &Ctx<'_>, outcome: &mut ImageOutcome) -> Result<()> {
    let image = load_image(&pair.image)?;
    let (h, w) = image.dims();
    let gt: Option<BinaryMask> = match &pair.gt {
        Some(path) => match load_gt(path, Some((h, w))) {
            Ok((gt, resized)) => {
                if resized {
                    outcome
                        .warnings
                        .push(format!("{}: ground truth resized to {h}x{w}", pair.stem));
                }
                Some(gt)
            }
            Err(e) => {
                outcome
                    .warnings
                    .push(format!("{}: ground truth unreadable, not evaluated: {e}", pair.stem));
                None
            }
        },
        None => None,
    };
    let working: RasterImage = limit_size(&image, ctx.settings.max_side);

    let trials = match ctx.settings.task.decode_mode {
        DecodeMode::Sampled { .. } => ctx.settings.trials,
        DecodeMode::Greedy => 1,
    };
    let mut trial_metrics = Vec::new();
    for trial in 0..trials {
        let mut cfg = ctx.settings.task.clone();
        cfg.seed = cfg.seed.wrapping_add(trial as u64);
        if let DecodeMode::Sampled { .. } = cfg.decode_mode {
            cfg.decode_mode = DecodeMode::Sampled { seed: cfg.seed };
        }
        let result = run_cycle(&working, &cfg, ctx.templates, ctx.backends);
        if trial == 0 {
            let trace = Trace::from_outcome(&pair.stem, &cfg, &result);
            write_json(&trace, &ctx.out.join("traces").join(format!("{}.json", pair.stem)))?;
        }
        let result = result.map_err(|e| e.source)?;
        let mask = resize_mask(&result.final_mask, h, w)?;
        if trial == 0 {
            save_mask(&mask, &ctx.out.join("masks").join(format!("{}.png", pair.stem)))?;
            let blended = overlay(&image, &mask)?;
            let path = ctx.out.join("overlays").join(format!("{}.png", pair.stem));
            blended
                .save(&path)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        }
        if let Some(gt) = &gt {
            trial_metrics.push(evaluate(&pair.stem, &mask, gt)?);
            if trial == 0 && ctx.options.diagnostics {
                let class = ctx
                    .options
                    .classes
                    .as_ref()
                    .and_then(|c| c.get(&pair.stem))
                    .map(String::as_str);
                outcome.diagnostics = image_diagnostics(&pair.stem, &result, gt, class, ctx.backends)?;
            }
        }
    }
    if !trial_metrics.is_empty() {
        outcome.metrics = Some(mean_metrics(&pair.stem, &trial_metrics));
    }
    Ok(())
}

/// Runs the cycle on every image of the manifest and writes
/// `masks/`, `overlays/`, `traces/`, `report.json` and `report.txt` under
/// `out`. Per-image failures are recorded and do not stop the run.
pub fn run_task(
    manifest: &DatasetManifest,
    settings: &RunSettings,
    templates: &PromptTemplates,
    backends: &Backends,
    out: &Path,
    options: &RunOptions,
) -> Result<RunReport> {
    settings.validate()?;
    for sub in ["masks", "overlays", "traces"] {
        let dir: PathBuf = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::InvalidInput(format!("{}: {e}", dir.display())))?;
    }
    let ctx = Ctx {
        settings,
        templates,
        backends,
        out,
        options,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<ImageOutcome> = pool.install(|| manifest.pairs.par_iter().map(|p| process(p, &ctx)).collect());

    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    let mut per_image = Vec::new();
    let mut diag = Vec::new();
    for o in outcomes {
        warnings.extend(o.warnings);
        match o.error {
            Some(error) => failures.push(Failure { image: o.stem, error }),
            None => {
                per_image.extend(o.metrics);
                if !o.diagnostics.is_empty() {
                    diag.push(o.diagnostics);
                }
            }
        }
    }
    let metrics = if per_image.is_empty() {
        None
    } else {
        Some(MetricReport::from_images(per_image)?)
    };
    let report = RunReport {
        dataset: manifest.name.clone(),
        task: settings.task.clone(),
        trials: settings.trials,
        images: manifest.pairs.len(),
        succeeded: manifest.pairs.len() - failures.len(),
        failures,
        warnings,
        metrics,
        diagnostics: options.diagnostics.then(|| diagnostics(&diag)),
    };
    write_json(&report, &out.join("report.json"))?;
    fs::write(out.join("report.txt"), report.to_text()).map_err(|e| Error::InvalidInput(format!("report.txt: {e}")))?;
    Ok(report)
}

/// Scores existing mask PNGs in `pred_dir` against a dataset's ground truth,
/// matching by stem.
pub fn evaluate_dir(manifest: &DatasetManifest, pred_dir: &Path) -> Result<(MetricReport, Vec<Failure>)> {
    let mut per_image = Vec::new();
    let mut failures = Vec::new();
    for pair in &manifest.pairs {
        let Some(gt_path) = &pair.gt else { continue };
        let result = (|| -> Result<ImageMetrics> {
            let pred = load_mask(&pred_dir.join(format!("{}.png", pair.stem)))?;
            let (gt, _) = load_gt(gt_path, Some(pred.dims()))?;
            evaluate(&pair.stem, &pred, &gt)
        })();
        match result {
            Ok(m) => per_image.push(m),
            Err(e) => failures.push(Failure {
                image: pair.stem.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok((MetricReport::from_images(per_image)?, failures))
}
