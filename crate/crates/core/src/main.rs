use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use promac::harness::dataset::load_classes;
use promac::harness::run::evaluate_dir;
use promac::harness::{backends_by_name, load_dataset, run_task, synth, Layout, RunOptions, RunSettings};
use promac::promptgen::PromptTemplates;

#[derive(Parser)]
#[command(
    name = "promac",
    version,
    about = "Iterative prompt-mask cycle for task-generic segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment every image of a dataset and write masks, traces and a report.
    Run(Box<RunArgs>),
    /// Score existing mask PNGs against a dataset's ground truth.
    Eval {
        /// Dataset root.
        dataset: PathBuf,
        /// Directory of predicted masks named `<stem>.png`.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "paired")]
        layout: Layout,
    },
    /// Write a synthetic leaf/caterpillar dataset for the mock backend.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Dataset root.
    dataset: PathBuf,
    #[arg(long, default_value = "paired")]
    layout: Layout,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Flat `key = value` settings file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task preset: cod, polyp, skin, glass.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    task_prompt: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    blend_weight: Option<f64>,
    /// original, halve, quarters, original+halve, original+halve+quarters.
    #[arg(long)]
    patch_strategy: Option<String>,
    /// inpaint, noise, bbox, none.
    #[arg(long)]
    visual_marker: Option<String>,
    #[arg(long)]
    backend: Option<String>,
    /// Shorthand for `--backend mock`.
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Repeats per image (sampled decoding only).
    #[arg(long)]
    trials: Option<usize>,
    /// Use sampled instead of greedy decoding.
    #[arg(long)]
    sampled: bool,
    /// Prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Add the per-iteration diagnostics table.
    #[arg(long)]
    diagnostics: bool,
    /// `stem = class` file for the name-similarity column.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Record wall-clock time per iteration in traces.
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn settings(&self) -> anyhow::Result<RunSettings> {
        let mut s = match &self.config {
            Some(path) => RunSettings::load(path)?,
            None => RunSettings::default(),
        };
        let overrides: [(&str, Option<String>); 13] = [
            ("preset", self.preset.clone()),
            ("task_prompt", self.task_prompt.clone()),
            ("iterations", self.iterations.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("blend_weight", self.blend_weight.map(|v| v.to_string())),
            ("patch_strategy", self.patch_strategy.clone()),
            ("visual_marker", self.visual_marker.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("decode", self.sampled.then(|| "sampled".to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
            ("trials", self.trials.map(|v| v.to_string())),
            ("templates", self.templates.as_ref().map(|p| p.display().to_string())),
            ("timing", self.timing.then(|| "true".to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                s.set(key, &v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let settings = args.settings()?;
    let backend = match (&args.backend, args.mock) {
        (Some(b), false) => b.clone(),
        (Some(b), true) if b != "mock" => bail!("--mock conflicts with --backend {b}"),
        _ => "mock".to_string(),
    };
    let backends = backends_by_name(&backend)?;
    let templates = match &settings.templates {
        Some(path) => PromptTemplates::load(path)?,
        None => PromptTemplates::default(),
    };
    let manifest = load_dataset(&args.dataset, args.layout)?;
    if manifest.pairs.is_empty() {
        bail!("no images found under {}", args.dataset.display());
    }
    let options = RunOptions {
        diagnostics: args.diagnostics,
        classes: args.classes.as_deref().map(load_classes).transpose()?,
    };
    let report = run_task(&manifest, &settings, &templates, &backends, &args.out, &options)?;
    print!("{}", report.to_text());
    if report.failed_run() {
        eprintln!("{} of {} images failed", report.failures.len(), report.images);
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> anyhow::Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(*args),
        Command::Eval { dataset, pred, layout } => {
            let manifest = load_dataset(&dataset, layout)?;
            let (report, failures) = evaluate_dir(&manifest, &pred)?;
            print!("{}", report.to_table());
            for f in &failures {
                eprintln!("{}: {}", f.image, f.error);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, count, size, seed } => {
            let samples = synth::generate(count, size, seed)?;
            synth::write_dataset(&out, &samples)?;
            println!("wrote {count} images to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
