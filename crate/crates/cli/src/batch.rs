use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use anyhow::{Context, Result};
use reposeg::pipeline::FINAL_MASK;
use reposeg::{read_image, Pipeline, PipelineConfig, PipelineError, PipelineOutput, Provider, ProviderSpec};
use serde::Serialize;

use crate::jobs::{provider_for, Job};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

/// Outcome for one input image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub name: String,
    pub image: PathBuf,
    pub status: Status,
    pub mask: Option<PathBuf>,
    pub prompt: Option<[usize; 2]>,
    pub selected_index: Option<usize>,
    pub ratios: Vec<f64>,
    pub used_fallback: bool,
    pub stage: Option<String>,
    pub error: Option<String>,
    pub message: Option<String>,
}

impl Record {
    fn new(job: &Job) -> Self {
        Self {
            name: job.name.clone(),
            image: job.image.clone(),
            status: Status::Ok,
            mask: None,
            prompt: None,
            selected_index: None,
            ratios: Vec::new(),
            used_fallback: false,
            stage: None,
            error: None,
            message: None,
        }
    }

    pub fn failed(job: &Job, stage: &str, kind: &str, message: String) -> Self {
        Self {
            status: Status::Error,
            stage: Some(stage.into()),
            error: Some(kind.into()),
            message: Some(message),
            ..Self::new(job)
        }
    }

    pub fn done(job: &Job, mask: PathBuf) -> Self {
        Self {
            mask: Some(mask),
            ..Self::new(job)
        }
    }

    fn from_pipeline_error(job: &Job, e: &PipelineError) -> Self {
        Self::failed(job, e.stage(), e.kind(), e.to_string())
    }

    pub fn succeeded(job: &Job, out: &PipelineOutput, mask: PathBuf) -> Self {
        Self {
            prompt: Some([out.prompt.x, out.prompt.y]),
            selected_index: Some(out.selection.selected_index),
            ratios: out.selection.ratios.clone(),
            used_fallback: out.selection.used_fallback,
            ..Self::done(job, mask)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry<'a> {
    pub name: &'a str,
    pub image: &'a Path,
    pub status: Status,
    pub error: Option<&'a str>,
    pub message: Option<&'a str>,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub input: &'a Path,
    pub workers: usize,
    pub config: &'a C,
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub images: Vec<ManifestEntry<'a>>,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(
        command: &'static str,
        input: &'a Path,
        workers: usize,
        config: &'a C,
        records: &'a [Record],
    ) -> Self {
        let succeeded = records.iter().filter(|r| r.status == Status::Ok).count();
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            input,
            workers,
            config,
            total: records.len(),
            succeeded,
            failed: records.len() - succeeded,
            images: records
                .iter()
                .map(|r| ManifestEntry {
                    name: &r.name,
                    image: &r.image,
                    status: r.status,
                    error: r.error.as_deref(),
                    message: r.message.as_deref(),
                })
                .collect(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

/// Writes the per-image records as CSV and JSON.
pub fn write_records(dir: &Path, stem: &str, records: &[Record]) -> Result<()> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    w.write_record([
        "name", "image", "status", "stage", "error", "selected_index", "prompt_x", "prompt_y",
        "ratio_0", "ratio_1", "ratio_2", "used_fallback", "mask", "message",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in records {
        let ratio = |i: usize| r.ratios.get(i).map(|v| format!("{v:.6}")).unwrap_or_default();
        w.write_record([
            r.name.clone(),
            r.image.display().to_string(),
            format!("{:?}", r.status).to_lowercase(),
            opt(r.stage.clone()),
            opt(r.error.clone()),
            opt(r.selected_index.map(|i| i.to_string())),
            opt(r.prompt.map(|p| p[0].to_string())),
            opt(r.prompt.map(|p| p[1].to_string())),
            ratio(0),
            ratio(1),
            ratio(2),
            r.used_fallback.to_string(),
            opt(r.mask.as_ref().map(|p| p.display().to_string())),
            opt(r.message.clone()),
        ])?;
    }
    w.flush()?;
    write_json(&dir.join(format!("{stem}.json")), records)
}

/// Runs one image through the pipeline and writes its masks into `dir`.
/// Nothing is written when a stage fails.
pub fn run_one(
    pipeline: &mut Pipeline,
    job: &Job,
    dir: &Path,
    intermediates: bool,
) -> Result<(PipelineOutput, PathBuf), PipelineError> {
    let image = read_image(&job.image)?;
    let out = pipeline.run(&image)?;
    out.write(dir, intermediates)?;
    Ok((out, dir.join(FINAL_MASK)))
}

fn connect(config: &PipelineConfig, spec: ProviderSpec) -> Result<Pipeline, PipelineError> {
    let provider = Provider::connect(&spec)?;
    Ok(Pipeline::with_provider(
        config.detector.clone(),
        config.selector.clone(),
        provider,
    ))
}

/// Per-worker state. A subprocess provider is spawned once per worker and
/// respawned after a provider failure; other providers are opened per image.
struct Worker<'a> {
    config: &'a PipelineConfig,
    persistent: Option<Pipeline>,
}

impl Worker<'_> {
    fn process(&mut self, job: &Job) -> Record {
        let spec = provider_for(&self.config.provider, job, true);
        let is_subprocess = matches!(spec, ProviderSpec::Subprocess { .. });
        let mut fresh;
        let pipeline = if is_subprocess {
            if self.persistent.is_none() {
                match connect(self.config, spec) {
                    Ok(p) => self.persistent = Some(p),
                    Err(e) => return Record::from_pipeline_error(job, &e),
                }
            }
            self.persistent.as_mut().expect("connected above")
        } else {
            fresh = match connect(self.config, spec) {
                Ok(p) => p,
                Err(e) => return Record::from_pipeline_error(job, &e),
            };
            &mut fresh
        };
        let dir = self.config.output_dir.join(&job.name);
        match run_one(pipeline, job, &dir, self.config.emit_intermediates) {
            Ok((out, mask)) => Record::succeeded(job, &out, mask),
            Err(e) => {
                if e.kind() == "ProviderFailure" {
                    self.persistent = None;
                }
                log::debug!("{}: {e}", job.name);
                Record::from_pipeline_error(job, &e)
            }
        }
    }
}

/// Processes `jobs` on a bounded pool. Records come back in job order.
pub fn run_batch(jobs: &[Job], config: &PipelineConfig, workers: usize) -> Vec<Record> {
    let workers = workers.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || {
                let mut worker = Worker {
                    config,
                    persistent: None,
                };
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(job) = jobs.get(i) else { break };
                    let record = worker.process(job);
                    if tx.send((i, record)).is_err() {
                        break;
                    }
                }
            });
        }
    });
    drop(tx);
    let mut slots: Vec<Option<Record>> = vec![None; jobs.len()];
    for (i, record) in rx {
        slots[i] = Some(record);
    }
    slots
        .into_iter()
        .zip(jobs)
        .map(|(slot, job)| {
            slot.unwrap_or_else(|| {
                Record::failed(job, "batch", "WorkerFailure", "worker stopped before this image".into())
            })
        })
        .collect()
}
