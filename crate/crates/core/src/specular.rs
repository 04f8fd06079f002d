//! Specular highlight detection and prompt point selection.
//!
//! Two deterministic threshold rules are offered: a top-percentile rule on the
//! luma histogram and a `mean + k * std` rule. Either threshold is raised to an
//! absolute floor, the thresholded set is opened with a square element, and
//! components below a minimum area are dropped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::components::{connected_components, largest_component, Connectivity};
use crate::grid::{BinaryMask, GrayImage, PixelPoint};
use crate::morphology;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("no specular region found")]
    NoSpecularRegion,
    #[error("region has no foreground pixels")]
    EmptyRegion,
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMethod {
    #[default]
    Percentile,
    Adaptive,
}

impl std::str::FromStr for DetectorMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "percentile" => Ok(Self::Percentile),
            "adaptive" => Ok(Self::Adaptive),
            other => Err(format!("unknown detector method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub method: DetectorMethod,
    /// Upper bound on the fraction of pixels at or above the percentile threshold.
    pub percentile_fraction: f64,
    pub adaptive_k: f64,
    pub absolute_floor: u8,
    /// Opening element is `(2 * opening_radius + 1)` pixels square.
    pub opening_radius: usize,
    pub min_region_area: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            method: DetectorMethod::Percentile,
            percentile_fraction: 0.005,
            adaptive_k: 3.0,
            absolute_floor: 200,
            opening_radius: 1,
            min_region_area: 4,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.percentile_fraction > 0.0 && self.percentile_fraction < 1.0) {
            return Err(DetectError::InvalidConfig(format!(
                "percentile_fraction must lie in (0, 1), got {}",
                self.percentile_fraction
            )));
        }
        if !(self.adaptive_k > 0.0 && self.adaptive_k.is_finite()) {
            return Err(DetectError::InvalidConfig(format!(
                "adaptive_k must be positive, got {}",
                self.adaptive_k
            )));
        }
        Ok(())
    }
}

/// Smallest `t` with `#{Y >= t} <= fraction * N`; 255 if even the top bin is too full.
pub fn percentile_threshold(gray: &GrayImage, fraction: f64) -> u8 {
    let hist = gray.histogram();
    let budget = fraction * gray.pixels().len() as f64;
    // at_or_above[t] is non-increasing in t, so scan downwards.
    let mut at_or_above = 0u64;
    let mut best = 255u8;
    for t in (0..=255usize).rev() {
        at_or_above += hist[t];
        if at_or_above as f64 <= budget {
            best = t as u8;
        } else {
            break;
        }
    }
    best
}

/// `round(mean + k * std)` over all pixels, clamped to `[0, 255]`.
pub fn adaptive_threshold(gray: &GrayImage, k: f64) -> u8 {
    let n = gray.pixels().len() as f64;
    let mean = gray.pixels().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = gray
        .pixels()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean + k * var.sqrt()).round().clamp(0.0, 255.0) as u8
}

/// Effective threshold `T = max(absolute_floor, T_method)`.
pub fn specular_threshold(gray: &GrayImage, config: &DetectorConfig) -> u8 {
    let method = match config.method {
        DetectorMethod::Percentile => percentile_threshold(gray, config.percentile_fraction),
        DetectorMethod::Adaptive => adaptive_threshold(gray, config.adaptive_k),
    };
    method.max(config.absolute_floor)
}

/// Pixels at or above the effective threshold, before any clean-up.
pub fn raw_specular_set(gray: &GrayImage, config: &DetectorConfig) -> BinaryMask {
    let t = specular_threshold(gray, config);
    let (w, h) = gray.dimensions();
    BinaryMask::from_fn(w, h, |x, y| gray.get(x, y) >= t)
}

/// Detects the specular region Ω.
pub fn detect_specular(gray: &GrayImage, config: &DetectorConfig) -> Result<BinaryMask, DetectError> {
    config.validate()?;
    let raw = raw_specular_set(gray, config);
    let opened = morphology::open(&raw, config.opening_radius);
    let omega = remove_small_components(&opened, config.min_region_area);
    if omega.is_empty() {
        return Err(DetectError::NoSpecularRegion);
    }
    Ok(omega)
}

fn remove_small_components(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    if min_area <= 1 {
        return mask.clone();
    }
    let labels = connected_components(mask, Connectivity::Eight);
    let (w, h) = mask.dimensions();
    BinaryMask::from_fn(w, h, |x, y| {
        let l = labels.get(x, y);
        l != 0 && labels.component_size(l) >= min_area
    })
}

/// Rounded mean position of the foreground pixels (half away from zero).
pub fn center_of_mass(region: &BinaryMask) -> Result<PixelPoint, DetectError> {
    let (mut n, mut sx, mut sy) = (0u64, 0u64, 0u64);
    for p in region.foreground() {
        n += 1;
        sx += p.x as u64;
        sy += p.y as u64;
    }
    if n == 0 {
        return Err(DetectError::EmptyRegion);
    }
    // floor(s / n + 1/2) in integers; coordinates are non-negative.
    let round = |s: u64| ((2 * s + n) / (2 * n)) as usize;
    Ok(PixelPoint::new(round(sx), round(sy)))
}

/// Point handed to the segmenter: the center of mass of the largest
/// eight-connected component, snapped to that component's nearest pixel
/// when the center falls outside it.
pub fn prompt_point(region: &BinaryMask) -> Result<PixelPoint, DetectError> {
    let labels = connected_components(region, Connectivity::Eight);
    let blob = largest_component(&labels).map_err(|_| DetectError::EmptyRegion)?;
    let com = center_of_mass(&blob)?;
    if blob.get(com.x, com.y) {
        return Ok(com);
    }
    let dist2 = |p: PixelPoint| {
        let dx = p.x as i64 - com.x as i64;
        let dy = p.y as i64 - com.y as i64;
        dx * dx + dy * dy
    };
    // min_by_key keeps the first minimum, i.e. lowest row-major order.
    blob.foreground()
        .min_by_key(|&p| dist2(p))
        .ok_or(DetectError::EmptyRegion)
}
