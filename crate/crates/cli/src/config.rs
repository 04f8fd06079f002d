use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, ValueEnum};
use reposeg::specular::DetectorMethod;
use reposeg::{PipelineConfig, ProviderSpec};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Percentile,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Files,
    Subprocess,
    Synthetic,
}

/// Pipeline flags shared by `run` and `batch`. Each one overrides the
/// matching value from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// TOML pipeline configuration
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Largest white-pixel ratio a candidate may have
    #[arg(long, value_name = "RATIO")]
    pub r_max: Option<f64>,
    #[arg(long, value_enum)]
    pub detector: Option<DetectorArg>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Segmenter command line for the subprocess provider
    #[arg(long, value_name = "CMD")]
    pub provider_cmd: Option<String>,
    /// Candidate masks for the files provider (mask_0.png ... mask_2.png)
    #[arg(long, value_name = "DIR")]
    pub candidates_dir: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write omega.png and candidate_<i>.png
    #[arg(long)]
    pub emit_intermediates: bool,
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| format!(" (line {})", text[..s.start].matches('\n').count() + 1))
            .unwrap_or_default();
        UsageError(format!("invalid config {}: {}{line}", path.display(), e.message())).into()
    })
}

impl PipelineArgs {
    /// Loads `--config` and applies the flag overrides. A files provider
    /// without a directory is left with an empty path, which later resolves
    /// per image.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(r) = self.r_max {
            cfg.selector.r_max = r;
        }
        if let Some(d) = self.detector {
            cfg.detector.method = match d {
                DetectorArg::Percentile => DetectorMethod::Percentile,
                DetectorArg::Adaptive => DetectorMethod::Adaptive,
            };
        }
        let kind = self.provider.or_else(|| {
            if self.provider_cmd.is_some() {
                Some(ProviderKind::Subprocess)
            } else if self.candidates_dir.is_some() {
                Some(ProviderKind::Files)
            } else {
                None
            }
        });
        if let Some(kind) = kind {
            cfg.provider = self.provider_spec(kind, &cfg.provider)?;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.emit_intermediates |= self.emit_intermediates;

        cfg.detector
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        cfg.selector
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        if let ProviderSpec::Subprocess { .. } = cfg.provider {
            cfg.provider
                .validate()
                .map_err(|e| UsageError(e.to_string()))?;
        }
        Ok(cfg)
    }

    fn provider_spec(&self, kind: ProviderKind, current: &ProviderSpec) -> Result<ProviderSpec> {
        Ok(match kind {
            ProviderKind::Files => {
                let candidates_dir = match (&self.candidates_dir, current) {
                    (Some(dir), _) => dir.clone(),
                    (None, ProviderSpec::Files { candidates_dir }) => candidates_dir.clone(),
                    (None, _) => PathBuf::new(),
                };
                ProviderSpec::Files { candidates_dir }
            }
            ProviderKind::Subprocess => {
                let timeout_secs = match current {
                    ProviderSpec::Subprocess { timeout_secs, .. } => *timeout_secs,
                    _ => reposeg::segmenter::DEFAULT_TIMEOUT_SECS,
                };
                let command = match (&self.provider_cmd, current) {
                    (Some(cmd), _) => shlex::split(cmd)
                        .ok_or_else(|| UsageError(format!("cannot parse --provider-cmd `{cmd}`")))?,
                    (None, ProviderSpec::Subprocess { command, .. }) => command.clone(),
                    (None, _) => {
                        return Err(UsageError("the subprocess provider needs --provider-cmd".into()).into())
                    }
                };
                ProviderSpec::Subprocess {
                    command,
                    timeout_secs,
                }
            }
            ProviderKind::Synthetic => match current {
                ProviderSpec::Synthetic { .. } => current.clone(),
                _ => ProviderSpec::default(),
            },
        })
    }
}
