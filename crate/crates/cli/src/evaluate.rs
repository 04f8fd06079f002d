use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use reposeg::metrics::{load_report, ComparisonTable, MaskPair, MeanScores, METRIC_ROWS};
use reposeg::pipeline::FINAL_MASK;
use reposeg::{evaluate_dataset, otsu, read_gray, write_mask, MetricsReport};
use serde::{Deserialize, Serialize};

use crate::batch::{write_json, Record};
use crate::jobs::Job;
use crate::UsageError;

fn raster_in(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["png", "pgm"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Pairs every ground-truth mask under `gt_dir` with its prediction.
///
/// Ground truth is either `<gt_dir>/<name>/<gt_name>` (scene layout) or
/// `<gt_dir>/<name>.png|pgm`. The prediction is `<pred_dir>/<name>/<mask_name>`
/// or `<pred_dir>/<name>.png|pgm`.
pub fn discover_pairs(pred_dir: &Path, gt_dir: &Path, mask_name: &str, gt_name: &str) -> Result<Vec<MaskPair>> {
    if !gt_dir.is_dir() {
        return Err(UsageError(format!("ground-truth directory {} does not exist", gt_dir.display())).into());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(gt_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    let mut pairs = Vec::new();
    for path in entries {
        let (name, gt) = if path.is_dir() && path.join(gt_name).is_file() {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            (name, path.join(gt_name))
        } else if path.is_file() && matches!(path.extension().and_then(|e| e.to_str()), Some("png" | "pgm")) {
            let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            (name, path)
        } else {
            continue;
        };
        let nested = pred_dir.join(&name).join(mask_name);
        let pred = if nested.is_file() {
            nested
        } else {
            raster_in(pred_dir, &name)
                .ok_or_else(|| anyhow!("no prediction for `{name}` (looked for {})", nested.display()))?
        };
        pairs.push(MaskPair::new(name, pred, gt));
    }
    if pairs.is_empty() {
        return Err(UsageError(format!("no ground-truth masks found in {}", gt_dir.display())).into());
    }
    Ok(pairs)
}

#[derive(Debug, Deserialize)]
struct PairRow {
    name: String,
    pred: PathBuf,
    gt: PathBuf,
}

/// Reads a `name,pred,gt` CSV. Relative paths are taken from the CSV's
/// directory.
pub fn read_pairs_csv(path: &Path) -> Result<Vec<MaskPair>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| UsageError(format!("cannot read pairs {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for row in reader.deserialize() {
        let row: PairRow = row.map_err(|e| UsageError(format!("invalid pairs {}: {e}", path.display())))?;
        pairs.push(MaskPair::new(row.name, base.join(row.pred), base.join(row.gt)));
    }
    if pairs.is_empty() {
        return Err(UsageError(format!("{} lists no pairs", path.display())).into());
    }
    Ok(pairs)
}

pub fn write_metrics(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let csv_path = dir.join("metrics.csv");
    let file = std::fs::File::create(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    report.write_csv(file)?;
    let json_path = dir.join("metrics.json");
    std::fs::write(&json_path, report.to_json()).with_context(|| format!("cannot write {}", json_path.display()))
}

pub fn evaluate(pairs: &[MaskPair], out: &Path) -> Result<MetricsReport> {
    let report = evaluate_dataset(pairs)?;
    write_metrics(&report, out)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct OtsuRecord {
    #[serde(flatten)]
    pub record: Record,
    pub threshold: Option<u8>,
}

/// Otsu baseline for one image. The mask is the brighter class unless
/// `invert` is set.
pub fn otsu_one(job: &Job, out: &Path, invert: bool) -> OtsuRecord {
    let result = (|| -> Result<(u8, PathBuf)> {
        let gray = read_gray(&job.image)?;
        let r = otsu(&gray)?;
        let mask = if invert { r.mask.inverted() } else { r.mask };
        let dir = out.join(&job.name);
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join(FINAL_MASK);
        write_mask(&mask, &path)?;
        Ok((r.threshold, path))
    })();
    match result {
        Ok((threshold, path)) => OtsuRecord {
            record: Record::done(job, path),
            threshold: Some(threshold),
        },
        Err(e) => {
            let kind = match e.downcast_ref::<reposeg::metrics::MetricsError>() {
                Some(reposeg::metrics::MetricsError::DegenerateImage) => "DegenerateImage",
                _ => "OtsuFailure",
            };
            OtsuRecord {
                record: Record::failed(job, "otsu", kind, format!("{e:#}")),
                threshold: None,
            }
        }
    }
}

pub fn write_otsu_records(dir: &Path, records: &[OtsuRecord]) -> Result<()> {
    let path = dir.join("otsu.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["name", "image", "status", "threshold", "mask", "error", "message"])?;
    for r in records {
        let rec = &r.record;
        w.write_record([
            rec.name.clone(),
            rec.image.display().to_string(),
            format!("{:?}", rec.status).to_lowercase(),
            r.threshold.map(|t| t.to_string()).unwrap_or_default(),
            rec.mask.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            rec.error.clone().unwrap_or_default(),
            rec.message.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    write_json(&dir.join("otsu.json"), records)
}

/// Parses `NAME=PATH`.
pub fn parse_method(arg: &str) -> Result<(String, PathBuf), String> {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got `{arg}`")),
    }
}

#[derive(Debug, Serialize)]
struct Improvement {
    method: String,
    iou: f64,
    dsc: f64,
    pixel_accuracy: f64,
}

#[derive(Debug, Serialize)]
struct ComparisonFile<'a> {
    table: &'a ComparisonTable,
    reference: Option<&'a str>,
    improvements: Vec<Improvement>,
}

/// Loads eval reports and builds the comparison table.
pub fn compare(methods: &[(String, PathBuf)]) -> Result<ComparisonTable> {
    let mut rows: Vec<(String, MeanScores)> = Vec::new();
    for (name, path) in methods {
        if rows.iter().any(|(n, _)| n == name) {
            bail!(UsageError(format!("method `{name}` given twice")));
        }
        let report = load_report(path).with_context(|| format!("cannot load report for `{name}`"))?;
        rows.push((name.clone(), report.mean));
    }
    Ok(ComparisonTable::new(&rows))
}

pub fn write_comparison(table: &ComparisonTable, reference: Option<&str>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut header = vec!["metric".to_string()];
    header.extend(table.methods.iter().cloned());
    w.write_record(&header)?;
    for (k, row) in METRIC_ROWS.iter().enumerate() {
        let mut line = vec![row.to_string()];
        line.extend(table.values[k].iter().map(|v| format!("{v:.4}")));
        w.write_record(&line)?;
    }
    w.flush()?;
    let improvements = match reference {
        Some(r) => table
            .improvements(r)?
            .into_iter()
            .map(|(method, g)| Improvement {
                method,
                iou: g[0],
                dsc: g[1],
                pixel_accuracy: g[2],
            })
            .collect(),
        None => Vec::new(),
    };
    write_json(
        &dir.join("comparison.json"),
        &ComparisonFile {
            table,
            reference,
            improvements,
        },
    )
}
