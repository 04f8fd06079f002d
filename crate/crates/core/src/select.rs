//! Candidate mask selection by white-pixel ratio.
//!
//! Each candidate's ratio is its foreground fraction of the full image.
//! Candidates above `r_max` are discarded and the largest remaining ratio wins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::BinaryMask;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("no candidate has a white ratio <= {r_max} (ratios {ratios:?})")]
    NoValidMask { r_max: f64, ratios: Vec<f64> },
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("invalid selector configuration: {0}")]
    InvalidConfig(String),
}

/// What to do when every candidate exceeds `r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    #[default]
    Strict,
    SmallestRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub r_max: f64,
    pub fallback_policy: FallbackPolicy,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            r_max: 0.5,
            fallback_policy: FallbackPolicy::Strict,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        if self.r_max > 0.0 && self.r_max <= 1.0 {
            Ok(())
        } else {
            Err(SelectError::InvalidConfig(format!(
                "r_max must lie in (0, 1], got {}",
                self.r_max
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected_index: usize,
    pub ratios: Vec<f64>,
    pub valid: Vec<bool>,
    pub used_fallback: bool,
}

/// Foreground pixels over total pixels.
pub fn white_ratio(mask: &BinaryMask) -> f64 {
    mask.foreground_count() as f64 / mask.area() as f64
}

/// Picks the candidate with the largest ratio not exceeding `r_max`
/// (lowest index on ties).
pub fn select_mask(
    candidates: &[BinaryMask],
    config: &SelectorConfig,
) -> Result<SelectionResult, SelectError> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(SelectError::NoCandidates);
    }
    let ratios: Vec<f64> = candidates.iter().map(white_ratio).collect();
    let valid: Vec<bool> = ratios.iter().map(|&r| r <= config.r_max).collect();

    let mut best: Option<usize> = None;
    for (i, &r) in ratios.iter().enumerate() {
        if valid[i] && best.is_none_or(|b| r > ratios[b]) {
            best = Some(i);
        }
    }
    if let Some(selected_index) = best {
        return Ok(SelectionResult {
            selected_index,
            ratios,
            valid,
            used_fallback: false,
        });
    }

    match config.fallback_policy {
        FallbackPolicy::Strict => Err(SelectError::NoValidMask {
            r_max: config.r_max,
            ratios,
        }),
        FallbackPolicy::SmallestRatio => {
            let mut smallest = 0;
            for (i, &r) in ratios.iter().enumerate() {
                if r < ratios[smallest] {
                    smallest = i;
                }
            }
            Ok(SelectionResult {
                selected_index: smallest,
                ratios,
                valid,
                used_fallback: true,
            })
        }
    }
}
