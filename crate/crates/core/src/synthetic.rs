//! Procedural scenes with exact ground truth and segmenter-like candidates.
//!
//! A scene is one flat object on a flat background with a circular specular
//! highlight on the object, plus seeded Gaussian noise. Candidate sets mimic a
//! multi-mask segmenter: the highlight alone, the object, and the object
//! merged with a slab of background.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BinaryMask, Image};
use crate::io::{read_image, read_mask, write_image, write_mask, RasterError};
use crate::segmenter::CandidateSet;

/// Candidate masks built by [`generate_candidates`] in order.
pub const CANDIDATE_COUNT: usize = 3;

/// White ratio that the background-inclusive candidate always exceeds.
pub const BROAD_CANDIDATE_MIN_RATIO: f64 = 0.6;

/// Minimum highlight peak intensity.
pub const MIN_PEAK: u8 = 240;

const OBJECT_MARGIN: usize = 2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle,
    Ellipse,
    RoundedRect,
}

/// Axis-aligned box the object shape is inscribed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    /// Center offset from the object center, as a fraction of the object width.
    pub offset_x: f64,
    /// Center offset from the object center, as a fraction of the object height.
    pub offset_y: f64,
    /// Disk radius in pixels.
    pub radius: f64,
    pub peak: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub shape: Shape,
    pub object: ObjectBox,
    pub object_intensity: u8,
    pub background_intensity: u8,
    pub highlight: Highlight,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub spec: SceneSpec,
    pub image: Image,
    pub gt_object: BinaryMask,
    pub gt_specular: BinaryMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    /// The object candidate equals the ground truth.
    Faithful,
    /// The object candidate carries boundary jitter, speckles and holes.
    #[default]
    Noisy,
}

impl std::str::FromStr for CandidateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "faithful" => Ok(Self::Faithful),
            "noisy" => Ok(Self::Noisy),
            other => Err(format!("unknown candidate mode `{other}`")),
        }
    }
}

impl SceneSpec {
    fn center(&self) -> (f64, f64) {
        let o = &self.object;
        (
            o.x as f64 + o.width as f64 / 2.0,
            o.y as f64 + o.height as f64 / 2.0,
        )
    }

    fn highlight_center(&self) -> (f64, f64) {
        let (cx, cy) = self.center();
        (
            cx + self.highlight.offset_x * self.object.width as f64,
            cy + self.highlight.offset_y * self.object.height as f64,
        )
    }

    fn object_contains(&self, x: usize, y: usize) -> bool {
        let o = &self.object;
        if x < o.x || y < o.y || x >= o.x + o.width || y >= o.y + o.height {
            return false;
        }
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let (cx, cy) = self.center();
        match self.shape {
            Shape::Rectangle => true,
            Shape::Ellipse => {
                let a = o.width as f64 / 2.0;
                let b = o.height as f64 / 2.0;
                ((px - cx) / a).powi(2) + ((py - cy) / b).powi(2) <= 1.0
            }
            Shape::RoundedRect => {
                let r = o.width.min(o.height) as f64 / 4.0;
                let (x0, y0) = (o.x as f64 + r, o.y as f64 + r);
                let (x1, y1) = (
                    (o.x + o.width) as f64 - r,
                    (o.y + o.height) as f64 - r,
                );
                let dx = (x0 - px).max(px - x1).max(0.0);
                let dy = (y0 - py).max(py - y1).max(0.0);
                dx * dx + dy * dy <= r * r
            }
        }
    }

    fn highlight_contains(&self, x: usize, y: usize) -> bool {
        let (hx, hy) = self.highlight_center();
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let r = self.highlight.radius;
        (px - hx).powi(2) + (py - hy).powi(2) <= r * r
    }

    pub fn object_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.object_contains(x, y))
    }

    pub fn highlight_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.highlight_contains(x, y))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.width < 8 || self.height < 8 {
            return bad(format!("image {}x{} is smaller than 8x8", self.width, self.height));
        }
        let o = &self.object;
        if o.width < 3 || o.height < 3 {
            return bad("object must be at least 3x3".into());
        }
        if o.x < OBJECT_MARGIN
            || o.y < OBJECT_MARGIN
            || o.x + o.width + OBJECT_MARGIN > self.width
            || o.y + o.height + OBJECT_MARGIN > self.height
        {
            return bad(format!("object {o:?} violates the {OBJECT_MARGIN}-pixel margin"));
        }
        if self.highlight.peak < MIN_PEAK {
            return bad(format!("highlight peak {} is below {MIN_PEAK}", self.highlight.peak));
        }
        if !(self.highlight.radius > 0.0 && self.highlight.radius.is_finite()) {
            return bad(format!("highlight radius {} must be positive", self.highlight.radius));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be non-negative", self.noise_sigma));
        }
        // Containment of the continuous disk in the object's box, then of the raster.
        let (hx, hy) = self.highlight_center();
        let r = self.highlight.radius;
        if hx - r < o.x as f64
            || hy - r < o.y as f64
            || hx + r > (o.x + o.width) as f64
            || hy + r > (o.y + o.height) as f64
        {
            return bad("highlight disk extends past the object".into());
        }
        let object = self.object_mask();
        let disk = self.highlight_mask();
        if disk.is_empty() {
            return bad("highlight disk covers no pixel".into());
        }
        if !disk.is_subset_of(&object) {
            return bad("highlight disk extends past the object".into());
        }
        Ok(())
    }
}

/// Renders a scene and its ground truth. Deterministic in `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<SceneSample, SynthError> {
    spec.validate()?;
    let gt_object = spec.object_mask();
    let gt_specular = spec.highlight_mask();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma validated"));

    let mut pixels = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let base = if gt_specular.get(x, y) {
                spec.highlight.peak
            } else if gt_object.get(x, y) {
                spec.object_intensity
            } else {
                spec.background_intensity
            };
            let v = match &noise {
                Some(n) => (base as f64 + n.sample(&mut rng)).round().clamp(0.0, 255.0) as u8,
                None => base,
            };
            pixels.push([v, v, v]);
        }
    }
    let image = Image::from_pixels(spec.width, spec.height, pixels).expect("dimensions validated");
    Ok(SceneSample {
        spec: spec.clone(),
        image,
        gt_object,
        gt_specular,
    })
}

/// The three segmenter-like candidates for a scene.
pub fn generate_candidates(sample: &SceneSample, mode: CandidateMode) -> CandidateSet {
    let object = match mode {
        CandidateMode::Faithful => sample.gt_object.clone(),
        CandidateMode::Noisy => {
            let mut rng = ChaCha8Rng::seed_from_u64(sample.spec.seed ^ 0x005E_EDCA_4D1D_A7E5_u64);
            perturb(&sample.gt_object, &mut rng)
        }
    };
    let broad = with_background_band(&sample.gt_object);
    CandidateSet::new(
        sample.image.dimensions(),
        vec![sample.gt_specular.clone(), object, broad],
        None,
    )
    .expect("generated candidates match the scene")
}

/// Object plus the fewest top rows that push the white ratio above 0.6.
fn with_background_band(object: &BinaryMask) -> BinaryMask {
    let (w, h) = object.dimensions();
    let area = (w * h) as f64;
    let mut band = object.clone();
    for y in 0..h {
        if band.foreground_count() as f64 > BROAD_CANDIDATE_MIN_RATIO * area {
            break;
        }
        for x in 0..w {
            band.set(x, y, true);
        }
    }
    band
}

const BOUNDARY_FLIP_PROBABILITY: f64 = 0.2;
const MAX_SPECKLES: usize = 5;
const MAX_HOLES: usize = 2;

fn has_4_neighbor(mask: &BinaryMask, x: usize, y: usize, value: bool) -> bool {
    let (w, h) = mask.dimensions();
    (x > 0 && mask.get(x - 1, y) == value)
        || (x + 1 < w && mask.get(x + 1, y) == value)
        || (y > 0 && mask.get(x, y - 1) == value)
        || (y + 1 < h && mask.get(x, y + 1) == value)
}

// Square of side `side` at (x, y) with `ring` extra pixels on each side must
// satisfy `pred` everywhere, inside the image.
fn square_all(
    x: usize,
    y: usize,
    side: usize,
    ring: usize,
    mask: &BinaryMask,
    pred: impl Fn(bool) -> bool,
) -> bool {
    let (w, h) = mask.dimensions();
    if x < ring || y < ring || x + side + ring > w || y + side + ring > h {
        return false;
    }
    (y - ring..y + side + ring).all(|yy| (x - ring..x + side + ring).all(|xx| pred(mask.get(xx, yy))))
}

/// One-pixel boundary jitter, then up to five speckles and two holes.
fn perturb(object: &BinaryMask, rng: &mut ChaCha8Rng) -> BinaryMask {
    let (w, h) = object.dimensions();
    let mut out = object.clone();
    for y in 0..h {
        for x in 0..w {
            let inside = object.get(x, y);
            if has_4_neighbor(object, x, y, !inside) && rng.random_bool(BOUNDARY_FLIP_PROBABILITY) {
                out.set(x, y, !inside);
            }
        }
    }

    let holes = rng.random_range(1..=MAX_HOLES);
    let mut placed = 0;
    for _ in 0..200 {
        if placed == holes {
            break;
        }
        let side = rng.random_range(1..=3);
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
        // Holes sit strictly inside the original object, two pixels from its edge.
        if square_all(x, y, side, 2, object, |v| v) {
            for yy in y..y + side {
                for xx in x..x + side {
                    out.set(xx, yy, false);
                }
            }
            placed += 1;
        }
    }

    let speckles = rng.random_range(1..=MAX_SPECKLES);
    placed = 0;
    for _ in 0..400 {
        if placed == speckles {
            break;
        }
        let side = rng.random_range(1..=2);
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
        // Speckles stay two pixels clear of anything already foreground.
        if square_all(x, y, side, 2, &out, |v| !v) {
            for yy in y..y + side {
                for xx in x..x + side {
                    out.set(xx, yy, true);
                }
            }
            placed += 1;
        }
    }
    out
}

/// Parameter ranges for drawing random scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub width: usize,
    pub height: usize,
    pub shapes: Vec<Shape>,
    /// Object box size as a fraction of the image size, `[min, max]`.
    pub object_fraction: [f64; 2],
    /// Range for both object and background intensity.
    pub intensity_range: [u8; 2],
    /// Minimum absolute object/background intensity difference.
    pub min_contrast: u8,
    pub peak_range: [u8; 2],
    pub radius_range: [f64; 2],
    /// Largest highlight area as a fraction of the image area.
    pub max_highlight_fraction: f64,
    pub noise_sigma_range: [f64; 2],
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            width: 192,
            height: 144,
            shapes: vec![Shape::Rectangle, Shape::Ellipse, Shape::RoundedRect],
            object_fraction: [0.35, 0.6],
            intensity_range: [30, 180],
            min_contrast: 50,
            peak_range: [245, 255],
            radius_range: [3.0, 6.0],
            max_highlight_fraction: 0.004,
            noise_sigma_range: [0.0, 5.0],
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.shapes.is_empty() {
            return bad("shapes must not be empty");
        }
        let [lo, hi] = self.object_fraction;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return bad("object_fraction must satisfy 0 < min <= max < 1");
        }
        let [ilo, ihi] = self.intensity_range;
        if ilo > ihi || (ihi - ilo) < self.min_contrast {
            return bad("intensity_range cannot provide min_contrast");
        }
        if self.peak_range[0] < MIN_PEAK || self.peak_range[0] > self.peak_range[1] {
            return bad("peak_range must lie within [240, 255]");
        }
        let [rlo, rhi] = self.radius_range;
        if !(rlo > 0.0 && rlo <= rhi) {
            return bad("radius_range must satisfy 0 < min <= max");
        }
        let [slo, shi] = self.noise_sigma_range;
        if !(slo >= 0.0 && slo <= shi && shi.is_finite()) {
            return bad("noise_sigma_range must satisfy 0 <= min <= max");
        }
        if !(self.max_highlight_fraction > 0.0 && self.max_highlight_fraction < 1.0) {
            return bad("max_highlight_fraction must lie in (0, 1)");
        }
        Ok(())
    }

    /// Draws the `index`-th scene. Same `(self, index)` always gives the same spec.
    pub fn scene(&self, index: u64) -> Result<SceneSpec, SynthError> {
        self.validate()?;
        let scene_seed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
        let (w, h) = (self.width, self.height);

        let shape = self.shapes[rng.random_range(0..self.shapes.len())];
        let [flo, fhi] = self.object_fraction;
        let ow = ((w as f64 * rng.random_range(flo..=fhi)).round() as usize).max(3);
        let oh = ((h as f64 * rng.random_range(flo..=fhi)).round() as usize).max(3);
        let margin = OBJECT_MARGIN + 2;
        if ow + 2 * margin > w || oh + 2 * margin > h {
            return Err(SynthError::InvalidSpec("object does not fit the image".into()));
        }
        let ox = rng.random_range(margin..=w - ow - margin);
        let oy = rng.random_range(margin..=h - oh - margin);

        let [ilo, ihi] = self.intensity_range;
        let (object_intensity, background_intensity) = loop {
            let a = rng.random_range(ilo..=ihi);
            let b = rng.random_range(ilo..=ihi);
            if a.abs_diff(b) >= self.min_contrast {
                break (a, b);
            }
        };

        let budget_radius = (self.max_highlight_fraction * (w * h) as f64 / std::f64::consts::PI).sqrt();
        let radius_cap = budget_radius.min(ow.min(oh) as f64 / 5.0);
        let [rlo, rhi] = self.radius_range;
        let (rlo, rhi) = (rlo.min(radius_cap), rhi.min(radius_cap));
        let noise_sigma = if self.noise_sigma_range[0] == self.noise_sigma_range[1] {
            self.noise_sigma_range[0]
        } else {
            rng.random_range(self.noise_sigma_range[0]..=self.noise_sigma_range[1])
        };
        let peak = rng.random_range(self.peak_range[0]..=self.peak_range[1]);

        let mut spec = SceneSpec {
            width: w,
            height: h,
            shape,
            object: ObjectBox { x: ox, y: oy, width: ow, height: oh },
            object_intensity,
            background_intensity,
            highlight: Highlight { offset_x: 0.0, offset_y: 0.0, radius: rlo, peak },
            noise_sigma,
            seed: rng.random(),
        };
        let budget_area = self.max_highlight_fraction * (w * h) as f64;
        let fits = |s: &SceneSpec| {
            s.validate().is_ok() && s.highlight_mask().foreground_count() as f64 <= budget_area
        };
        for _ in 0..64 {
            spec.highlight.radius = if rlo < rhi { rng.random_range(rlo..=rhi) } else { rlo };
            spec.highlight.offset_x = rng.random_range(-0.25..=0.25);
            spec.highlight.offset_y = rng.random_range(-0.25..=0.25);
            if fits(&spec) {
                return Ok(spec);
            }
        }
        spec.highlight.offset_x = 0.0;
        spec.highlight.offset_y = 0.0;
        spec.highlight.radius = rlo;
        while spec.highlight.radius > 0.5 {
            if fits(&spec) {
                return Ok(spec);
            }
            spec.highlight.radius -= 0.25;
        }
        Err(SynthError::InvalidSpec(
            "no highlight fits the object and the area budget".into(),
        ))
    }
}

/// Scene metadata stored next to a rendered scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(flatten)]
    pub spec: SceneSpec,
    #[serde(default)]
    pub candidate_mode: CandidateMode,
}

pub const SCENE_IMAGE: &str = "image.png";
pub const SCENE_GT_OBJECT: &str = "gt_object.png";
pub const SCENE_GT_SPECULAR: &str = "gt_specular.png";
pub const SCENE_SPEC: &str = "spec.json";
pub const SCENE_CANDIDATES: &str = "candidates";

/// Writes a scene directory: image, ground truth, candidates and `spec.json`.
pub fn write_scene(dir: &Path, sample: &SceneSample, mode: CandidateMode) -> Result<(), SynthError> {
    let io_err = |path: &Path, e: std::io::Error| SynthError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let cand_dir = dir.join(SCENE_CANDIDATES);
    std::fs::create_dir_all(&cand_dir).map_err(|e| io_err(&cand_dir, e))?;
    write_image(&sample.image, dir.join(SCENE_IMAGE))?;
    write_mask(&sample.gt_object, dir.join(SCENE_GT_OBJECT))?;
    write_mask(&sample.gt_specular, dir.join(SCENE_GT_SPECULAR))?;
    for (i, m) in generate_candidates(sample, mode).masks().iter().enumerate() {
        write_mask(m, cand_dir.join(format!("mask_{i}.png")))?;
    }
    let file = SceneFile {
        spec: sample.spec.clone(),
        candidate_mode: mode,
    };
    let spec_path = dir.join(SCENE_SPEC);
    let json = serde_json::to_string_pretty(&file).expect("scene spec serializes");
    std::fs::write(&spec_path, json).map_err(|e| io_err(&spec_path, e))
}

pub fn load_scene_file(path: &Path) -> Result<SceneFile, SynthError> {
    let text = std::fs::read_to_string(path).map_err(|e| SynthError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| SynthError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads back a scene written by [`write_scene`].
pub fn read_scene(dir: &Path) -> Result<(SceneSample, CandidateMode), SynthError> {
    let file = load_scene_file(&dir.join(SCENE_SPEC))?;
    let sample = SceneSample {
        spec: file.spec,
        image: read_image(dir.join(SCENE_IMAGE))?,
        gt_object: read_mask(dir.join(SCENE_GT_OBJECT))?,
        gt_specular: read_mask(dir.join(SCENE_GT_SPECULAR))?,
    };
    Ok((sample, file.candidate_mode))
}
