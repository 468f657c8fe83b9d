//! Detection refinement from visual-inertial tracking data.
//!
//! Raw detector output is improved in three stages: boxes are re-expressed in a
//! gravity-aligned image frame, detections whose metric size is implausible
//! for their category are down-weighted, and an online map of superpoints
//! accumulates label evidence across views. The crate also ships a synthetic
//! session generator, a COCO-style evaluator and the line-delimited file
//! formats used by the `vidar` command-line tool.

pub mod ablation;
pub mod category;
pub mod evalkit;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod scale;
pub mod semantic_map;
pub mod simulator;
pub mod spatial_grid;

pub use category::{Category, CategoryDict, CategoryId};
pub use geometry::{BBox, CameraFrame, CameraIntrinsics, Detection, DetectionFrame, Pose, Vec3};
pub use pipeline::{FrameResult, Pipeline, PipelineConfig, ScoredDetection};
pub use scale::ScaleDatabase;
pub use semantic_map::{MapConfig, SemanticMap};
