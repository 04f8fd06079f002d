//! Object mask selection guided by specular highlights.
//!
//! A specular highlight must lie on the surface that reflects it. The pipeline
//! detects the highlight, prompts a multi-mask segmenter at its center, keeps
//! the largest candidate whose white ratio stays under a bound, and cleans
//! the result with connected-component analysis and hole filling.
//!
//! Modules:
//! - [`grid`], [`io`]: pixel grids and PNG/PGM I/O
//! - [`specular`]: highlight detection and the prompt point
//! - [`segmenter`]: candidate providers and the subprocess wire protocol
//! - [`select`]: ratio-gated candidate selection
//! - [`components`]: labelling, largest component, hole filling
//! - [`metrics`]: IoU, DSC, pixel accuracy, Otsu baseline, reports
//! - [`synthetic`]: procedural scenes with ground truth
//! - [`pipeline`]: the stages wired together

pub mod components;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod morphology;
pub mod pipeline;
pub mod segmenter;
pub mod select;
pub mod specular;
pub mod synthetic;

pub use components::{connected_components, fill_holes, largest_component, postprocess, Connectivity, LabelMap};
pub use grid::{to_luma, BinaryMask, GrayImage, Image, PixelPoint};
pub use io::{read_gray, read_image, read_mask, write_image, write_mask};
pub use metrics::{dsc, evaluate_dataset, iou, otsu, pixel_accuracy, relative_improvement, MetricsReport};
pub use pipeline::{run_pipeline, Pipeline, PipelineConfig, PipelineError, PipelineOutput};
pub use segmenter::{request_candidates, CandidateSet, Provider, ProviderSpec};
pub use select::{select_mask, white_ratio, SelectionResult, SelectorConfig};
pub use specular::{center_of_mass, detect_specular, prompt_point, DetectorConfig};
pub use synthetic::{generate_candidates, generate_scene, SceneSample, SceneSpec};
