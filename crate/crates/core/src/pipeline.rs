//! End-to-end pipeline: highlight detection, prompt point, candidate
//! request, ratio-gated selection and clean-up.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::components::{postprocess, PostprocessError};
use crate::grid::{to_luma, BinaryMask, Image, PixelPoint};
use crate::io::{write_mask, RasterError};
use crate::segmenter::{CandidateSet, Provider, ProviderError, ProviderSpec};
use crate::select::{select_mask, SelectError, SelectionResult, SelectorConfig};
use crate::specular::{detect_specular, prompt_point, DetectError, DetectorConfig};

pub const FINAL_MASK: &str = "final_mask.png";
pub const OMEGA_MASK: &str = "omega.png";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub selector: SelectorConfig,
    pub provider: ProviderSpec,
    pub output_dir: PathBuf,
    pub emit_intermediates: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            selector: SelectorConfig::default(),
            provider: ProviderSpec::default(),
            output_dir: PathBuf::from("out"),
            emit_intermediates: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.detector
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.selector
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.provider
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("specular detection: {0}")]
    Detect(DetectError),
    #[error("prompt point: {0}")]
    Prompt(DetectError),
    #[error("segmenter: {0}")]
    Segment(#[from] ProviderError),
    #[error("mask selection: {0}")]
    Select(#[from] SelectError),
    #[error("post-processing: {0}")]
    Postprocess(#[from] PostprocessError),
    #[error("writing outputs: {0}")]
    Output(#[from] RasterError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("pipeline invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    /// Stage that failed.
    pub fn stage(&self) -> &'static str {
        match self {
            Self::Detect(_) => "detect",
            Self::Prompt(_) => "prompt",
            Self::Segment(_) => "segment",
            Self::Select(_) => "select",
            Self::Postprocess(_) => "postprocess",
            Self::Output(_) => "output",
            Self::Config(_) => "config",
            Self::Invariant(_) => "verify",
        }
    }

    /// Short error name for manifests and reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Detect(DetectError::NoSpecularRegion) => "NoSpecularRegion",
            Self::Detect(DetectError::InvalidConfig(_)) | Self::Config(_) => "InvalidConfig",
            Self::Detect(DetectError::EmptyRegion) | Self::Prompt(_) => "EmptyRegion",
            Self::Segment(ProviderError::NoCandidates) => "NoCandidates",
            Self::Segment(ProviderError::DimensionMismatch { .. }) => "DimensionMismatch",
            Self::Segment(_) => "ProviderFailure",
            Self::Select(SelectError::NoValidMask { .. }) => "NoValidMask",
            Self::Select(_) => "SelectionFailure",
            Self::Postprocess(_) => "EmptyMask",
            Self::Output(_) => "OutputFailure",
            Self::Invariant(_) => "InvariantViolation",
        }
    }
}

/// Everything produced by one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub omega: BinaryMask,
    pub prompt: PixelPoint,
    pub candidates: CandidateSet,
    pub selection: SelectionResult,
    pub final_mask: BinaryMask,
}

impl PipelineOutput {
    /// Re-derives the final mask from the selected candidate and checks the prompt.
    pub fn verify(&self) -> Result<(), PipelineError> {
        if !self.omega.is_foreground(self.prompt) {
            return Err(PipelineError::Invariant(format!(
                "prompt {} is not a highlight pixel",
                self.prompt
            )));
        }
        let selected = self
            .candidates
            .masks()
            .get(self.selection.selected_index)
            .ok_or_else(|| PipelineError::Invariant("selected index out of range".into()))?;
        if postprocess(selected)? != self.final_mask {
            return Err(PipelineError::Invariant(
                "final mask differs from the post-processed selection".into(),
            ));
        }
        Ok(())
    }

    /// Writes `final_mask.png`, and with `intermediates` also `omega.png` and
    /// `candidate_<i>.png`. Returns the written paths.
    pub fn write(&self, dir: &Path, intermediates: bool) -> Result<Vec<PathBuf>, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|source| RasterError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        let mut put = |mask: &BinaryMask, name: String| -> Result<(), PipelineError> {
            let path = dir.join(name);
            write_mask(mask, &path)?;
            written.push(path);
            Ok(())
        };
        if intermediates {
            put(&self.omega, OMEGA_MASK.to_string())?;
            for (i, m) in self.candidates.masks().iter().enumerate() {
                put(m, format!("candidate_{i}.png"))?;
            }
        }
        put(&self.final_mask, FINAL_MASK.to_string())?;
        Ok(written)
    }
}

/// A configured pipeline holding a live provider handle.
pub struct Pipeline {
    pub detector: DetectorConfig,
    pub selector: SelectorConfig,
    provider: Provider,
}

impl Pipeline {
    pub fn new(config: &PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self {
            detector: config.detector.clone(),
            selector: config.selector.clone(),
            provider: Provider::connect(&config.provider)?,
        })
    }

    pub fn with_provider(detector: DetectorConfig, selector: SelectorConfig, provider: Provider) -> Self {
        Self {
            detector,
            selector,
            provider,
        }
    }

    pub fn provider_mut(&mut self) -> &mut Provider {
        &mut self.provider
    }

    pub fn run(&mut self, image: &Image) -> Result<PipelineOutput, PipelineError> {
        let gray = to_luma(image);
        let omega = detect_specular(&gray, &self.detector).map_err(PipelineError::Detect)?;
        let prompt = prompt_point(&omega).map_err(PipelineError::Prompt)?;
        log::debug!("prompt point {prompt}, highlight area {}", omega.foreground_count());
        let candidates = self.provider.request_candidates(image, prompt)?;
        let selection = select_mask(candidates.masks(), &self.selector)?;
        log::debug!("ratios {:?} -> candidate {}", selection.ratios, selection.selected_index);
        let final_mask = postprocess(&candidates.masks()[selection.selected_index])?;
        let output = PipelineOutput {
            omega,
            prompt,
            candidates,
            selection,
            final_mask,
        };
        output.verify()?;
        Ok(output)
    }
}

/// Runs the pipeline once and writes its masks to `config.output_dir`.
///
/// Nothing is written when any stage fails.
pub fn run_pipeline(image: &Image, config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let output = Pipeline::new(config)?.run(image)?;
    output.write(&config.output_dir, config.emit_intermediates)?;
    Ok(output)
}
