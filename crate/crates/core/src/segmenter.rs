//! Point-promptable multi-mask segmenters.
//!
//! A provider turns `(image, point)` into one to three candidate masks. Three
//! backends exist: masks read from a directory, a child process speaking the
//! line-delimited JSON protocol in [`protocol`], and the synthetic generator.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BinaryMask, Image, PixelPoint};
use crate::io::{read_mask, write_image, RasterError};
use crate::synthetic::{self, CandidateMode, SceneSpec};

/// Most candidates a provider may return.
pub const MAX_CANDIDATES: usize = 3;

pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("segmenter returned no candidate masks")]
    NoCandidates,
    #[error("candidate {index} is {found:?}, image is {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("provider failure: {0}")]
    ProviderFailure(String),
    #[error("invalid provider spec: {0}")]
    InvalidSpec(String),
    #[error("prompt point {point} lies outside the {width}x{height} image")]
    PointOutOfBounds {
        point: PixelPoint,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

fn failure(msg: impl Into<String>) -> ProviderError {
    ProviderError::ProviderFailure(msg.into())
}

/// One to three candidate masks, all sized like the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    masks: Vec<BinaryMask>,
    scores: Option<Vec<f64>>,
}

impl CandidateSet {
    /// Checks count and dimensions against the image size `expected`.
    pub fn new(
        expected: (usize, usize),
        masks: Vec<BinaryMask>,
        scores: Option<Vec<f64>>,
    ) -> Result<Self, ProviderError> {
        if masks.is_empty() {
            return Err(ProviderError::NoCandidates);
        }
        if masks.len() > MAX_CANDIDATES {
            return Err(failure(format!(
                "{} candidates exceed the maximum of {MAX_CANDIDATES}",
                masks.len()
            )));
        }
        if let Some(s) = &scores {
            if s.len() != masks.len() {
                return Err(failure(format!(
                    "{} scores for {} masks",
                    s.len(),
                    masks.len()
                )));
            }
        }
        for (index, m) in masks.iter().enumerate() {
            if m.dimensions() != expected {
                return Err(ProviderError::DimensionMismatch {
                    index,
                    expected,
                    found: m.dimensions(),
                });
            }
        }
        Ok(Self { masks, scores })
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    /// Provider quality scores; informational only.
    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// Serializable description of a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSpec {
    /// Reads `mask_0`, `mask_1`, `mask_2` (`.png` or `.pgm`) from a directory.
    Files { candidates_dir: PathBuf },
    /// Child process speaking the JSON-lines protocol.
    Subprocess {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    /// Regenerates candidates from a scene description.
    Synthetic {
        #[serde(default)]
        mode: CandidateMode,
        #[serde(default)]
        scene_spec: Option<PathBuf>,
    },
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

impl Default for ProviderSpec {
    fn default() -> Self {
        Self::Synthetic {
            mode: CandidateMode::default(),
            scene_spec: None,
        }
    }
}

impl ProviderSpec {
    pub fn validate(&self) -> Result<(), ProviderError> {
        match self {
            Self::Files { candidates_dir } if candidates_dir.as_os_str().is_empty() => {
                Err(ProviderError::InvalidSpec("candidates_dir is empty".into()))
            }
            Self::Subprocess { command, .. } if command.is_empty() => {
                Err(ProviderError::InvalidSpec("subprocess command is empty".into()))
            }
            Self::Subprocess { timeout_secs: 0, .. } => {
                Err(ProviderError::InvalidSpec("timeout_secs must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Files { .. } => "files",
            Self::Subprocess { .. } => "subprocess",
            Self::Synthetic { .. } => "synthetic",
        }
    }
}

/// A live provider handle. Subprocess handles own their child process and
/// must be used from one thread at a time.
pub enum Provider {
    Files(FilesProvider),
    Subprocess(SubprocessProvider),
    Synthetic(SyntheticProvider),
}

impl Provider {
    pub fn connect(spec: &ProviderSpec) -> Result<Self, ProviderError> {
        spec.validate()?;
        Ok(match spec {
            ProviderSpec::Files { candidates_dir } => Self::Files(FilesProvider::new(candidates_dir)),
            ProviderSpec::Subprocess {
                command,
                timeout_secs,
            } => Self::Subprocess(SubprocessProvider::spawn(
                command,
                Duration::from_secs(*timeout_secs),
            )?),
            ProviderSpec::Synthetic { mode, scene_spec } => {
                let scene = match scene_spec {
                    Some(path) => Some(
                        synthetic::load_scene_file(path)
                            .map_err(|e| failure(e.to_string()))?
                            .spec,
                    ),
                    None => None,
                };
                Self::Synthetic(SyntheticProvider { mode: *mode, scene })
            }
        })
    }

    /// Asks for candidate masks around `point`.
    pub fn request_candidates(
        &mut self,
        image: &Image,
        point: PixelPoint,
    ) -> Result<CandidateSet, ProviderError> {
        if !image.contains(point) {
            return Err(ProviderError::PointOutOfBounds {
                point,
                width: image.width(),
                height: image.height(),
            });
        }
        match self {
            Self::Files(p) => p.request(image),
            Self::Subprocess(p) => p.request(image, point),
            Self::Synthetic(p) => p.request(image),
        }
    }
}

/// Opens a provider from `spec` and issues a single request.
pub fn request_candidates(
    spec: &ProviderSpec,
    image: &Image,
    point: PixelPoint,
) -> Result<CandidateSet, ProviderError> {
    Provider::connect(spec)?.request_candidates(image, point)
}

pub struct FilesProvider {
    dir: PathBuf,
}

impl FilesProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Existing `mask_i` files in index order; `.png` wins over `.pgm`.
    pub fn candidate_paths(&self) -> Result<Vec<PathBuf>, ProviderError> {
        if !self.dir.is_dir() {
            return Err(failure(format!(
                "candidates directory {} does not exist",
                self.dir.display()
            )));
        }
        Ok((0..MAX_CANDIDATES)
            .filter_map(|i| {
                ["png", "pgm"]
                    .iter()
                    .map(|ext| self.dir.join(format!("mask_{i}.{ext}")))
                    .find(|p| p.is_file())
            })
            .collect())
    }

    fn request(&self, image: &Image) -> Result<CandidateSet, ProviderError> {
        let masks = self
            .candidate_paths()?
            .iter()
            .map(read_mask)
            .collect::<Result<Vec<_>, _>>()?;
        CandidateSet::new(image.dimensions(), masks, None)
    }
}

pub struct SyntheticProvider {
    pub mode: CandidateMode,
    pub scene: Option<SceneSpec>,
}

impl SyntheticProvider {
    pub fn new(mode: CandidateMode, scene: SceneSpec) -> Self {
        Self {
            mode,
            scene: Some(scene),
        }
    }

    fn request(&self, image: &Image) -> Result<CandidateSet, ProviderError> {
        let spec = self
            .scene
            .as_ref()
            .ok_or_else(|| failure("synthetic provider has no scene spec"))?;
        let sample = synthetic::generate_scene(spec).map_err(|e| failure(e.to_string()))?;
        if sample.image != *image {
            return Err(failure("image does not match the synthetic scene spec"));
        }
        let set = synthetic::generate_candidates(&sample, self.mode);
        CandidateSet::new(image.dimensions(), set.masks().to_vec(), None)
    }
}

/// Wire format of the subprocess provider: one JSON object per line.
pub mod protocol {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Point {
        pub x: i64,
        pub y: i64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Request {
        pub id: i64,
        pub image: String,
        pub point: Point,
        pub max_masks: usize,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Response {
        pub id: i64,
        pub masks: Vec<String>,
        pub scores: Vec<f64>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ErrorReply {
        pub id: i64,
        pub error: String,
    }

    #[derive(Debug, Clone, PartialEq)]
    pub enum Reply {
        Masks(Response),
        Error(ErrorReply),
    }

    /// Parses one reply line. Anything that is neither shape is an error.
    pub fn parse_reply(line: &str) -> Result<Reply, String> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| format!("reply is not JSON: {e}"))?;
        if value.get("error").is_some() {
            return serde_json::from_value(value)
                .map(Reply::Error)
                .map_err(|e| format!("malformed error reply: {e}"));
        }
        serde_json::from_value(value)
            .map(Reply::Masks)
            .map_err(|e| format!("malformed reply: {e}"))
    }

    pub fn encode<T: Serialize>(message: &T) -> String {
        serde_json::to_string(message).expect("protocol messages serialize")
    }
}

pub struct SubprocessProvider {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: i64,
    workdir: tempfile::TempDir,
    broken: Option<String>,
}

impl SubprocessProvider {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self, ProviderError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ProviderError::InvalidSpec("subprocess command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| failure(format!("cannot start `{program}`: {e}")))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let workdir = tempfile::Builder::new()
            .prefix("reposeg-provider")
            .tempdir()
            .map_err(|e| failure(format!("cannot create work directory: {e}")))?;
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
            next_id: 0,
            workdir,
            broken: None,
        })
    }

    fn exit_note(&mut self) -> String {
        match self.child.try_wait() {
            Ok(Some(status)) => format!("child exited with {status}"),
            _ => "child closed its output".to_string(),
        }
    }

    fn request(&mut self, image: &Image, point: PixelPoint) -> Result<CandidateSet, ProviderError> {
        if let Some(reason) = &self.broken {
            return Err(failure(format!("provider unusable: {reason}")));
        }
        let result = self.exchange(image, point);
        if let Err(ProviderError::ProviderFailure(reason)) = &result {
            self.broken = Some(reason.clone());
        }
        result
    }

    fn exchange(&mut self, image: &Image, point: PixelPoint) -> Result<CandidateSet, ProviderError> {
        let id = self.next_id;
        self.next_id += 1;
        let image_path = self.workdir.path().join(format!("request_{id}.png"));
        write_image(image, &image_path)?;

        let request = protocol::Request {
            id,
            image: image_path.display().to_string(),
            point: protocol::Point {
                x: point.x as i64,
                y: point.y as i64,
            },
            max_masks: MAX_CANDIDATES,
        };
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| failure("child input is closed"))?;
        let sent = writeln!(stdin, "{}", protocol::encode(&request)).and_then(|_| stdin.flush());
        if let Err(e) = sent {
            let note = self.exit_note();
            return Err(failure(format!("cannot send request: {e} ({note})")));
        }

        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(failure(format!("cannot read reply: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                return Err(failure(format!(
                    "no reply within {} s",
                    self.timeout.as_secs_f64()
                )));
            }
            Err(RecvTimeoutError::Disconnected) => {
                // Give the child a moment to report its status.
                let _ = self.child.wait();
                let note = self.exit_note();
                return Err(failure(format!("no reply: {note}")));
            }
        };
        let _ = std::fs::remove_file(&image_path);

        let response = match protocol::parse_reply(&line).map_err(failure)? {
            protocol::Reply::Error(e) if e.id == id => {
                return Err(failure(format!("error reply: {}", e.error)))
            }
            protocol::Reply::Error(e) => {
                return Err(failure(format!("error reply for id {} while expecting {id}", e.id)))
            }
            protocol::Reply::Masks(r) => r,
        };
        if response.id != id {
            return Err(failure(format!("reply id {} does not match request id {id}", response.id)));
        }
        if response.masks.len() != response.scores.len() {
            return Err(failure(format!(
                "{} masks but {} scores",
                response.masks.len(),
                response.scores.len()
            )));
        }
        if response.masks.len() > MAX_CANDIDATES {
            return Err(failure(format!("{} masks exceed {MAX_CANDIDATES}", response.masks.len())));
        }
        let masks = response
            .masks
            .iter()
            .map(|p| read_mask(Path::new(p)).map_err(|e| failure(format!("unreadable mask: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        CandidateSet::new(image.dimensions(), masks, Some(response.scores))
    }
}

impl Drop for SubprocessProvider {
    fn drop(&mut self) {
        // Closing stdin asks a well-behaved child to exit.
        self.stdin.take();
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
