//! Segmentation metrics, the Otsu baseline, and dataset reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BinaryMask, GrayImage};
use crate::io::{read_mask, RasterError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: prediction is {pred:?}, ground truth is {gt:?}")]
    DimensionMismatch {
        pred: (usize, usize),
        gt: (usize, usize),
    },
    #[error("image has a single intensity; no threshold separates two classes")]
    DegenerateImage,
    #[error("baseline must be positive, got {0}")]
    ZeroBaseline(f64),
    #[error("no image pairs to evaluate")]
    EmptyDataset,
    #[error("pair ({pred}, {gt}): {source}")]
    Pair {
        pred: PathBuf,
        gt: PathBuf,
        #[source]
        source: Box<MetricsError>,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("report output failed: {0}")]
    Output(String),
}

/// Pixel-level confusion counts of a prediction against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn of(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self, MetricsError> {
        if pred.dimensions() != gt.dimensions() {
            return Err(MetricsError::DimensionMismatch {
                pred: pred.dimensions(),
                gt: gt.dimensions(),
            });
        }
        let mut c = Confusion::default();
        for (&p, &g) in pred.pixels().iter().zip(gt.pixels()) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn iou(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }

    pub fn dsc(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn pixel_accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.fn_ + self.tn;
        (self.tp + self.tn) as f64 / total as f64
    }
}

/// Intersection over union; 1.0 when both masks are empty.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    Ok(Confusion::of(pred, gt)?.iou())
}

/// Dice similarity coefficient; 1.0 when both masks are empty.
pub fn dsc(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    Ok(Confusion::of(pred, gt)?.dsc())
}

/// Fraction of pixels classified the same way in both masks.
pub fn pixel_accuracy(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    Ok(Confusion::of(pred, gt)?.pixel_accuracy())
}

/// Percent change of `new` relative to `baseline`.
pub fn relative_improvement(new: f64, baseline: f64) -> Result<f64, MetricsError> {
    if baseline.is_nan() || baseline <= 0.0 {
        return Err(MetricsError::ZeroBaseline(baseline));
    }
    Ok(100.0 * (new - baseline) / baseline)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtsuResult {
    pub threshold: u8,
    /// Pixels strictly brighter than `threshold`.
    pub mask: BinaryMask,
}

/// Between-class variance of every threshold, up to the constant factor `1/N^2`.
///
/// For `t` the lower class is `Y <= t`. Thresholds leaving a class empty score 0.
/// The numerator `N * S0 - n0 * S` is formed exactly in integers.
pub fn otsu_scores(hist: &[u64; 256]) -> [f64; 256] {
    let total: u64 = hist.iter().sum();
    let sum: u128 = hist.iter().enumerate().map(|(v, &c)| v as u128 * c as u128).sum();
    let mut scores = [0.0; 256];
    let (mut n0, mut s0) = (0u64, 0u128);
    for t in 0..256 {
        n0 += hist[t];
        s0 += t as u128 * hist[t] as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = total as i128 * s0 as i128 - n0 as i128 * sum as i128;
        let diff = diff as f64;
        scores[t] = diff * diff / (n0 as f64 * n1 as f64);
    }
    scores
}

/// Threshold maximizing between-class variance; smallest maximizer on ties.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8, MetricsError> {
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(MetricsError::DegenerateImage);
    }
    let scores = otsu_scores(hist);
    let mut best = 0usize;
    for t in 1..256 {
        if scores[t] > scores[best] {
            best = t;
        }
    }
    Ok(best as u8)
}

/// Otsu binarization with the brighter class as foreground.
pub fn otsu(gray: &GrayImage) -> Result<OtsuResult, MetricsError> {
    let threshold = otsu_threshold(&gray.histogram())?;
    let (w, h) = gray.dimensions();
    let mask = BinaryMask::from_fn(w, h, |x, y| gray.get(x, y) > threshold);
    Ok(OtsuResult { threshold, mask })
}

/// Scores for one prediction/ground-truth pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub name: String,
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub iou: f64,
    pub dsc: f64,
    pub pixel_accuracy: f64,
}

impl ImageScores {
    pub fn from_masks(
        name: impl Into<String>,
        pred: &BinaryMask,
        gt: &BinaryMask,
    ) -> Result<Self, MetricsError> {
        let c = Confusion::of(pred, gt)?;
        Ok(Self {
            name: name.into(),
            pred: None,
            gt: None,
            iou: c.iou(),
            dsc: c.dsc(),
            pixel_accuracy: c.pixel_accuracy(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub iou: f64,
    pub dsc: f64,
    pub pixel_accuracy: f64,
}

/// Per-image scores plus their unweighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub images: Vec<ImageScores>,
    pub mean: MeanScores,
}

impl MetricsReport {
    pub fn from_scores(images: Vec<ImageScores>) -> Result<Self, MetricsError> {
        if images.is_empty() {
            return Err(MetricsError::EmptyDataset);
        }
        let n = images.len() as f64;
        let mean = MeanScores {
            iou: images.iter().map(|s| s.iou).sum::<f64>() / n,
            dsc: images.iter().map(|s| s.dsc).sum::<f64>() / n,
            pixel_accuracy: images.iter().map(|s| s.pixel_accuracy).sum::<f64>() / n,
        };
        Ok(Self { images, mean })
    }

    /// CSV with one row per image followed by a `mean` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let out_err = |e: csv::Error| MetricsError::Output(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "pred", "gt", "iou", "dsc", "pixel_accuracy"])
            .map_err(out_err)?;
        let path_str = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        for s in &self.images {
            w.write_record([
                s.name.clone(),
                path_str(&s.pred),
                path_str(&s.gt),
                s.iou.to_string(),
                s.dsc.to_string(),
                s.pixel_accuracy.to_string(),
            ])
            .map_err(out_err)?;
        }
        w.write_record([
            "mean".to_string(),
            String::new(),
            String::new(),
            self.mean.iou.to_string(),
            self.mean.dsc.to_string(),
            self.mean.pixel_accuracy.to_string(),
        ])
        .map_err(out_err)?;
        w.flush().map_err(|e| MetricsError::Output(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        serde_json::from_str(text).map_err(|e| MetricsError::Output(e.to_string()))
    }
}

/// A prediction mask and the ground truth it is scored against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPair {
    pub name: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
}

impl MaskPair {
    pub fn new(name: impl Into<String>, pred: impl Into<PathBuf>, gt: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            pred: pred.into(),
            gt: gt.into(),
        }
    }
}

fn score_pair(pair: &MaskPair) -> Result<ImageScores, MetricsError> {
    let annotate = |source: MetricsError| MetricsError::Pair {
        pred: pair.pred.clone(),
        gt: pair.gt.clone(),
        source: Box::new(source),
    };
    let pred = read_mask(&pair.pred).map_err(|e| annotate(e.into()))?;
    let gt = read_mask(&pair.gt).map_err(|e| annotate(e.into()))?;
    let mut scores = ImageScores::from_masks(pair.name.clone(), &pred, &gt).map_err(annotate)?;
    scores.pred = Some(pair.pred.clone());
    scores.gt = Some(pair.gt.clone());
    Ok(scores)
}

/// Scores every pair (in parallel) and averages per image.
///
/// Results keep input order; the first failing pair in input order is reported.
pub fn evaluate_dataset(pairs: &[MaskPair]) -> Result<MetricsReport, MetricsError> {
    let results: Vec<Result<ImageScores, MetricsError>> = pairs.par_iter().map(score_pair).collect();
    let scores = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    MetricsReport::from_scores(scores)
}

/// Metric rows of the comparison table.
pub const METRIC_ROWS: [&str; 3] = ["IoU", "DSC", "Pixel Acc."];

/// Side-by-side comparison of several methods' mean scores, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub methods: Vec<String>,
    /// `values[metric][method]`, percent.
    pub values: [Vec<f64>; 3],
}

impl ComparisonTable {
    pub fn new(methods: &[(String, MeanScores)]) -> Self {
        let col = |f: fn(&MeanScores) -> f64| methods.iter().map(|(_, m)| 100.0 * f(m)).collect();
        Self {
            methods: methods.iter().map(|(n, _)| n.clone()).collect(),
            values: [col(|m| m.iou), col(|m| m.dsc), col(|m| m.pixel_accuracy)],
        }
    }

    /// Relative improvement of `reference` over every other method, per metric.
    pub fn improvements(&self, reference: &str) -> Result<Vec<(String, [f64; 3])>, MetricsError> {
        let r = self
            .methods
            .iter()
            .position(|m| m == reference)
            .ok_or_else(|| MetricsError::Output(format!("unknown reference method `{reference}`")))?;
        let mut out = Vec::new();
        for (i, name) in self.methods.iter().enumerate() {
            if i == r {
                continue;
            }
            let mut gains = [0.0; 3];
            for (k, gain) in gains.iter_mut().enumerate() {
                *gain = relative_improvement(self.values[k][r], self.values[k][i])?;
            }
            out.push((name.clone(), gains));
        }
        Ok(out)
    }

    /// Plain-text table with metric rows and method columns.
    pub fn render(&self, reference: Option<&str>) -> Result<String, MetricsError> {
        let mut s = String::new();
        let width = self.methods.iter().map(|m| m.len()).max().unwrap_or(0).max(8);
        s.push_str(&format!("{:<12}", "Metric [%]"));
        for m in &self.methods {
            s.push_str(&format!(" | {m:>width$}"));
        }
        s.push('\n');
        s.push_str(&"-".repeat(12 + self.methods.len() * (width + 3)));
        s.push('\n');
        for (k, row) in METRIC_ROWS.iter().enumerate() {
            s.push_str(&format!("{row:<12}"));
            for v in &self.values[k] {
                s.push_str(&format!(" | {v:>width$.2}"));
            }
            s.push('\n');
        }
        if let Some(reference) = reference {
            s.push('\n');
            for (name, gains) in self.improvements(reference)? {
                s.push_str(&format!(
                    "{reference} vs {name}: IoU {:+.1}%, DSC {:+.1}%, Pixel Acc. {:+.1}%\n",
                    gains[0], gains[1], gains[2]
                ));
            }
        }
        Ok(s)
    }
}

/// Loads a JSON report written by [`MetricsReport::to_json`].
pub fn load_report(path: &Path) -> Result<MetricsReport, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|e| RasterError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    MetricsReport::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair_grid() -> (BinaryMask, BinaryMask) {
        // 4x4, gt a 2x2 block, pred shifted right by one.
        let gt = BinaryMask::from_rows(&["1100", "1100", "0000", "0000"]);
        let pred = BinaryMask::from_rows(&["0110", "0110", "0000", "0000"]);
        (pred, gt)
    }

    #[test]
    fn metric_examples() {
        let (pred, gt) = pair_grid();
        assert_abs_diff_eq!(iou(&pred, &gt).unwrap(), 2.0 / 6.0, epsilon = 1e-15);
        assert_eq!(dsc(&pred, &gt).unwrap(), 0.5);
        assert_eq!(pixel_accuracy(&pred, &gt).unwrap(), 0.75);
        let i = iou(&pred, &gt).unwrap();
        assert_abs_diff_eq!(2.0 * i / (1.0 + i), 0.5, epsilon = 1e-12);

        assert_eq!(iou(&gt, &gt).unwrap(), 1.0);
        assert_eq!(dsc(&gt, &gt).unwrap(), 1.0);
        assert_eq!(pixel_accuracy(&gt, &gt).unwrap(), 1.0);
        let far = BinaryMask::from_rows(&["0000", "0000", "0011", "0011"]);
        assert_eq!(iou(&far, &gt).unwrap(), 0.0);
        assert_eq!(dsc(&far, &gt).unwrap(), 0.0);
        assert_eq!(pixel_accuracy(&gt.inverted(), &gt).unwrap(), 0.0);

        let empty = BinaryMask::new(4, 4);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert_eq!(dsc(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = BinaryMask::new(3, 3);
        let b = BinaryMask::new(3, 4);
        assert!(matches!(iou(&a, &b), Err(MetricsError::DimensionMismatch { .. })));
        assert!(matches!(dsc(&a, &b), Err(MetricsError::DimensionMismatch { .. })));
        assert!(matches!(pixel_accuracy(&a, &b), Err(MetricsError::DimensionMismatch { .. })));
    }

    #[test]
    fn relative_improvement_examples() {
        assert_abs_diff_eq!(relative_improvement(98.86, 78.03).unwrap(), 26.7, epsilon = 0.05);
        assert_abs_diff_eq!(relative_improvement(99.43, 81.29).unwrap(), 22.3, epsilon = 0.05);
        assert_eq!(relative_improvement(42.0, 42.0).unwrap(), 0.0);
        assert!(matches!(relative_improvement(1.0, 0.0), Err(MetricsError::ZeroBaseline(_))));
    }

    #[test]
    fn otsu_two_levels() {
        let gray = GrayImage::from_fn(10, 10, |x, _| if x < 5 { 50 } else { 200 });
        let r = otsu(&gray).unwrap();
        assert_eq!(r.threshold, 50);
        assert_eq!(r.mask, BinaryMask::from_fn(10, 10, |x, _| x >= 5));
    }

    #[test]
    fn otsu_extremes_tie_to_zero() {
        let gray = GrayImage::from_fn(20, 1, |x, _| if x < 10 { 0 } else { 255 });
        let scores = otsu_scores(&gray.histogram());
        assert!(scores[..255].iter().all(|&s| s == scores[0]));
        assert_eq!(otsu(&gray).unwrap().threshold, 0);
    }

    #[test]
    fn otsu_uniform_is_degenerate() {
        assert!(matches!(otsu(&GrayImage::filled(5, 5, 77)), Err(MetricsError::DegenerateImage)));
    }

    #[test]
    fn report_means_and_csv() {
        let a = BinaryMask::from_rows(&["10", "00"]);
        let b = BinaryMask::from_rows(&["01", "00"]);
        let s1 = ImageScores::from_masks("one", &a, &a).unwrap();
        let s2 = ImageScores::from_masks("two", &a, &b).unwrap();
        let report = MetricsReport::from_scores(vec![s1, s2]).unwrap();
        assert_eq!(report.mean.iou, 0.5);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "name,pred,gt,iou,dsc,pixel_accuracy");
        assert!(lines[3].starts_with("mean,,,0.5,0.5,"));
        let back = MetricsReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
        assert!(matches!(MetricsReport::from_scores(vec![]), Err(MetricsError::EmptyDataset)));
    }

    #[test]
    fn comparison_table_renders() {
        let t = ComparisonTable::new(&[
            ("baseline".into(), MeanScores { iou: 0.7803, dsc: 0.8129, pixel_accuracy: 0.9087 }),
            ("ours".into(), MeanScores { iou: 0.9886, dsc: 0.9943, pixel_accuracy: 0.9968 }),
        ]);
        let gains = t.improvements("ours").unwrap();
        assert_eq!(gains.len(), 1);
        assert_abs_diff_eq!(gains[0].1[0], 26.7, epsilon = 0.05);
        assert_abs_diff_eq!(gains[0].1[2], 9.7, epsilon = 0.05);
        let text = t.render(Some("ours")).unwrap();
        assert!(text.contains("IoU"));
        assert!(text.contains("98.86"));
        assert!(text.contains("ours vs baseline: IoU +26.7%"));
        assert!(t.render(Some("nope")).is_err());
    }
}
