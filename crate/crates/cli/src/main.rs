//! `reposeg` command line: single-image and batch runs, evaluation, the
//! Otsu baseline, synthetic data generation and comparison reports.

mod batch;
mod config;
mod evaluate;
mod jobs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use reposeg::synthetic::{generate_scene, write_scene, CandidateMode, DatasetSpec, SCENE_GT_OBJECT};
use reposeg::pipeline::FINAL_MASK;

use crate::batch::{Manifest, Record};
use crate::config::PipelineArgs;

/// Bad arguments or configuration. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "reposeg", version, about = "Highlight-prompted object mask selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline on one image
    Run {
        /// Input image (PNG or PGM) or scene directory
        image: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Run the pipeline on every image or scene directory in a directory
    Batch {
        input: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Worker threads (default: logical CPUs)
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score predicted masks against ground truth
    Eval {
        /// Directory of predictions (`<name>/final_mask.png` or `<name>.png`)
        #[arg(long, required_unless_present = "pairs")]
        pred: Option<PathBuf>,
        /// Directory of ground truth (`<name>/gt_object.png` or `<name>.png`)
        #[arg(long, required_unless_present = "pairs")]
        gt: Option<PathBuf>,
        /// CSV with `name,pred,gt` columns instead of directory discovery
        #[arg(long, conflicts_with_all = ["pred", "gt"])]
        pairs: Option<PathBuf>,
        #[arg(long, default_value = FINAL_MASK)]
        mask_name: String,
        #[arg(long, default_value = SCENE_GT_OBJECT)]
        gt_name: String,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Generate a synthetic dataset of scene directories
    Synth {
        /// Dataset parameters as JSON (defaults when omitted)
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the dataset spec
        #[arg(long)]
        seed: Option<u64>,
        /// Candidate masks written to each scene
        #[arg(long, default_value = "noisy", value_parser = parse_mode)]
        candidates: CandidateMode,
    },
    /// Otsu baseline masks for an image or directory
    Otsu {
        input: PathBuf,
        #[arg(long, default_value = "otsu")]
        out: PathBuf,
        /// Keep the darker class instead of the brighter one
        #[arg(long)]
        invert_otsu: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compare eval reports side by side
    Report {
        /// Eval outputs as NAME=PATH to metrics.json
        #[arg(required = true, value_parser = evaluate::parse_method)]
        methods: Vec<(String, PathBuf)>,
        /// Method whose relative improvement over the others is reported
        #[arg(long)]
        reference: Option<String>,
        /// Also write comparison.csv and comparison.json here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<CandidateMode, String> {
    s.parse()
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn cmd_run(image: &Path, args: &PipelineArgs) -> Result<()> {
    let config = args.resolve()?;
    let mut found = jobs::discover(image)?;
    if found.len() != 1 {
        return Err(UsageError(format!("{} holds {} images; use `batch`", image.display(), found.len())).into());
    }
    let job = found.remove(0);
    let spec = jobs::provider_for(&config.provider, &job, false);
    spec.validate()
        .map_err(|e| UsageError(e.to_string()))?;
    let mut pipeline = reposeg::Pipeline::with_provider(
        config.detector.clone(),
        config.selector.clone(),
        reposeg::Provider::connect(&spec).map_err(reposeg::PipelineError::from)?,
    );
    let (out, mask) = batch::run_one(&mut pipeline, &job, &config.output_dir, config.emit_intermediates)?;
    let record = [Record::succeeded(&job, &out, mask.clone())];
    Manifest::new("run", image, 1, &config, &record).write(&config.output_dir)?;
    println!(
        "{}: prompt {}, candidate {} of {} (ratios {:?}) -> {}",
        job.name,
        out.prompt,
        out.selection.selected_index,
        out.candidates.len(),
        out.selection.ratios,
        mask.display()
    );
    Ok(())
}

fn summarize(records: &[Record]) {
    let failed = records.iter().filter(|r| r.status == batch::Status::Error).count();
    for r in records.iter().filter(|r| r.status == batch::Status::Error) {
        eprintln!(
            "{}: {} ({})",
            r.name,
            r.error.as_deref().unwrap_or("error"),
            r.message.as_deref().unwrap_or_default()
        );
    }
    println!("{} images, {} ok, {failed} failed", records.len(), records.len() - failed);
}

fn cmd_batch(input: &Path, args: &PipelineArgs, workers: Option<usize>) -> Result<()> {
    let config = args.resolve()?;
    let found = jobs::discover(input)?;
    let workers = workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(UsageError("--workers must be at least 1".into()).into());
    }
    create_dir(&config.output_dir)?;
    let records = batch::run_batch(&found, &config, workers);
    batch::write_records(&config.output_dir, "batch", &records)?;
    Manifest::new("batch", input, workers, &config, &records).write(&config.output_dir)?;
    summarize(&records);
    Ok(())
}

fn cmd_eval(
    pred: Option<&Path>,
    gt: Option<&Path>,
    pairs: Option<&Path>,
    mask_name: &str,
    gt_name: &str,
    out: &Path,
) -> Result<()> {
    let pairs = match (pairs, pred, gt) {
        (Some(csv), _, _) => evaluate::read_pairs_csv(csv)?,
        (None, Some(pred), Some(gt)) => evaluate::discover_pairs(pred, gt, mask_name, gt_name)?,
        _ => return Err(UsageError("give --pairs or both --pred and --gt".into()).into()),
    };
    let report = evaluate::evaluate(&pairs, out)?;
    println!(
        "{} pairs: IoU {:.4}, DSC {:.4}, pixel accuracy {:.4} -> {}",
        report.images.len(),
        report.mean.iou,
        report.mean.dsc,
        report.mean.pixel_accuracy,
        out.join("metrics.json").display()
    );
    Ok(())
}

fn cmd_synth(spec: Option<&Path>, count: u64, out: &Path, seed: Option<u64>, mode: CandidateMode) -> Result<()> {
    let mut dataset = match spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<DatasetSpec>(&text)
                .map_err(|e| UsageError(format!("invalid dataset spec {}: {e}", path.display())))?
        }
        None => DatasetSpec::default(),
    };
    if let Some(seed) = seed {
        dataset.seed = seed;
    }
    dataset
        .validate()
        .map_err(|e| UsageError(format!("invalid dataset spec: {e}")))?;
    create_dir(out)?;
    let width = count.saturating_sub(1).to_string().len().max(4);
    for i in 0..count {
        let scene = dataset.scene(i)?;
        let sample = generate_scene(&scene)?;
        write_scene(&out.join(format!("scene_{i:0width$}")), &sample, mode)?;
    }
    batch::write_json(&out.join("dataset.json"), &dataset)?;
    println!("{count} scenes -> {}", out.display());
    Ok(())
}

fn cmd_otsu(input: &Path, out: &Path, invert: bool, workers: Option<usize>) -> Result<()> {
    let found = jobs::discover(input)?;
    create_dir(out)?;
    let workers = workers.unwrap_or_else(default_workers).clamp(1, found.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<evaluate::OtsuRecord>> = vec![None; found.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let Some(job) = found.get(i) else { break };
                        done.push((i, evaluate::otsu_one(job, out, invert)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("otsu worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let records: Vec<_> = slots.into_iter().map(|r| r.expect("every job ran")).collect();
    evaluate::write_otsu_records(out, &records)?;
    let plain: Vec<Record> = records.iter().map(|r| r.record.clone()).collect();
    let snapshot = serde_json::json!({ "invert_otsu": invert });
    Manifest::new("otsu", input, workers, &snapshot, &plain).write(out)?;
    summarize(&plain);
    Ok(())
}

fn cmd_report(methods: &[(String, PathBuf)], reference: Option<&str>, out: Option<&Path>) -> Result<()> {
    let table = evaluate::compare(methods)?;
    if let Some(r) = reference {
        if !table.methods.iter().any(|m| m == r) {
            return Err(UsageError(format!("reference `{r}` is not among the methods")).into());
        }
    }
    print!("{}", table.render(reference)?);
    if let Some(dir) = out {
        evaluate::write_comparison(&table, reference, dir)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { image, pipeline } => cmd_run(&image, &pipeline),
        Command::Batch {
            input,
            pipeline,
            workers,
        } => cmd_batch(&input, &pipeline, workers),
        Command::Eval {
            pred,
            gt,
            pairs,
            mask_name,
            gt_name,
            out,
        } => cmd_eval(
            pred.as_deref(),
            gt.as_deref(),
            pairs.as_deref(),
            &mask_name,
            &gt_name,
            &out,
        ),
        Command::Synth {
            spec,
            count,
            out,
            seed,
            candidates,
        } => cmd_synth(spec.as_deref(), count, &out, seed, candidates),
        Command::Otsu {
            input,
            out,
            invert_otsu,
            workers,
        } => cmd_otsu(&input, &out, invert_otsu, workers),
        Command::Report {
            methods,
            reference,
            out,
        } => cmd_report(&methods, reference.as_deref(), out.as_deref()),
    }
}

/// The error chain on one line. Many library errors already quote their
/// source, so causes contained in the previous message are skipped.
fn one_line(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if parts.last().is_some_and(|p| p.contains(&msg)) {
            continue;
        }
        parts.push(msg);
    }
    parts.join(": ").replace('\n', " ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
