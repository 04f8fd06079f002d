//! Input discovery shared by `run`, `batch` and `otsu`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use reposeg::synthetic::{SCENE_CANDIDATES, SCENE_IMAGE, SCENE_SPEC};
use reposeg::ProviderSpec;

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub name: String,
    pub image: PathBuf,
    /// Set when the image lives in a scene directory with its candidates
    /// and `spec.json`.
    pub scene: Option<PathBuf>,
}

fn is_raster(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pgm")
    )
}

fn scene_job(dir: &Path) -> Job {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    Job {
        name,
        image: dir.join(SCENE_IMAGE),
        scene: Some(dir.to_path_buf()),
    }
}

/// A single image, a scene directory, or a directory of images and scene
/// directories. Jobs come back sorted by name.
pub fn discover(input: &Path) -> Result<Vec<Job>> {
    if input.is_file() {
        let scene = (input.file_name() == Some(SCENE_IMAGE.as_ref()))
            .then(|| input.parent().map(Path::to_path_buf))
            .flatten();
        let name = match &scene {
            Some(dir) => scene_job(dir).name,
            None => stem(input),
        };
        return Ok(vec![Job {
            name,
            image: input.to_path_buf(),
            scene,
        }]);
    }
    if !input.is_dir() {
        return Err(UsageError(format!("input {} does not exist", input.display())).into());
    }
    if input.join(SCENE_IMAGE).is_file() {
        return Ok(vec![scene_job(input)]);
    }
    let entries = std::fs::read_dir(input)
        .map_err(|e| UsageError(format!("cannot list {}: {e}", input.display())))?;
    let mut jobs = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        let job = if path.is_dir() && path.join(SCENE_IMAGE).is_file() {
            scene_job(&path)
        } else if path.is_file() && is_raster(&path) {
            Job {
                name: stem(&path),
                image: path,
                scene: None,
            }
        } else {
            continue;
        };
        if let Some(other) = jobs.insert(job.name.clone(), job.clone()) {
            return Err(UsageError(format!(
                "inputs {} and {} share the name `{}`",
                other.image.display(),
                job.image.display(),
                job.name
            ))
            .into());
        }
    }
    if jobs.is_empty() {
        return Err(UsageError(format!("no images found in {}", input.display())).into());
    }
    Ok(jobs.into_values().collect())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Fills in per-image provider paths. A files provider with no directory
/// reads the scene's candidates; with a directory, batches read
/// `<dir>/<name>`. A synthetic provider reads the scene's `spec.json`.
pub fn provider_for(base: &ProviderSpec, job: &Job, batch: bool) -> ProviderSpec {
    match base {
        ProviderSpec::Files { candidates_dir } if candidates_dir.as_os_str().is_empty() => {
            let dir = match &job.scene {
                Some(scene) => scene.join(SCENE_CANDIDATES),
                None => job
                    .image
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join(SCENE_CANDIDATES)
                    .join(&job.name),
            };
            ProviderSpec::Files { candidates_dir: dir }
        }
        ProviderSpec::Files { candidates_dir } if batch => ProviderSpec::Files {
            candidates_dir: candidates_dir.join(&job.name),
        },
        ProviderSpec::Synthetic { mode, scene_spec } => {
            let from_scene = job.scene.as_ref().map(|s| s.join(SCENE_SPEC));
            let scene_spec = if batch {
                from_scene.or_else(|| scene_spec.clone())
            } else {
                scene_spec.clone().or(from_scene)
            };
            ProviderSpec::Synthetic {
                mode: *mode,
                scene_spec,
            }
        }
        other => other.clone(),
    }
}
