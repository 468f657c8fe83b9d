//! Per-frame orchestration: orientation correction, scale filtering and map
//! fusion, combined into one confidence per detection.
//!
//! The final confidence is `p_scale * p_map * p_l`. A disabled stage
//! contributes a factor of exactly 1.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::category::CategoryId;
use crate::geometry::{
    rotate_bbox_hull, roll_from_gravity, BBox, BoxDirection, CameraFrame, Detection, DetectionFrame, GeometryError,
};
use crate::scale::{scale_bucket, scale_filter_prob, ProjectedPoints, ScaleDatabase, ScaleEstimate};
use crate::semantic_map::{MapConfig, MapError, MapSnapshot, ObjectPoint, SemanticMap};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("frame {got} arrived after frame {previous}; frame ids must increase")]
    OutOfOrder { previous: u64, got: u64 },
    #[error("frame {frame_id}: label {label} has no scale database entry")]
    UnknownLabel { frame_id: u64, label: CategoryId },
    #[error("frame {frame_id}: {source}")]
    Geometry { frame_id: u64, source: GeometryError },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Orientation correction.
    pub enable_oc: bool,
    /// Scale-based filtering.
    pub enable_sf: bool,
    /// Online semantic mapping.
    pub enable_osm: bool,
    /// Only used for human-readable listings; every detection is always emitted.
    pub report_threshold: f64,
    /// Scale database file; the shipped COCO database when absent.
    pub scale_db_path: Option<PathBuf>,
    pub map: MapConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::with_modules(true, true, true)
    }
}

impl PipelineConfig {
    pub fn with_modules(enable_oc: bool, enable_sf: bool, enable_osm: bool) -> Self {
        Self {
            enable_oc,
            enable_sf,
            enable_osm,
            report_threshold: 0.5,
            scale_db_path: None,
            map: MapConfig::default(),
        }
    }

    /// Short label naming the enabled stages, e.g. `SF+OC+SSD`.
    pub fn row_label(&self) -> String {
        if self.enable_oc && self.enable_sf && self.enable_osm {
            return "ALL".to_string();
        }
        let mut parts = Vec::new();
        if self.enable_osm {
            parts.push("OSM");
        }
        if self.enable_sf {
            parts.push("SF");
        }
        if self.enable_oc {
            parts.push("OC");
        }
        parts.push("SSD");
        parts.join("+")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.report_threshold) {
            return Err(PipelineError::InvalidConfig(format!(
                "report_threshold must be in [0, 1], got {}",
                self.report_threshold
            )));
        }
        self.map.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDetection {
    pub label: CategoryId,
    pub p: f64,
    /// Original image frame.
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionDiagnostics {
    pub p_l: f64,
    pub p_scale: f64,
    pub p_map: f64,
    pub d_w: Option<f64>,
    pub d_h: Option<f64>,
    pub d: Option<f64>,
    /// Roll of the frame the detection was processed in (0 for original).
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_id: u64,
    pub outputs: Vec<ScoredDetection>,
    pub diagnostics: Vec<DetectionDiagnostics>,
}

impl FrameResult {
    /// Outputs at or above the display threshold.
    pub fn reportable(&self, threshold: f64) -> impl Iterator<Item = &ScoredDetection> {
        self.outputs.iter().filter(move |o| o.p >= threshold)
    }
}

/// Stateful processor for one session.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    db: ScaleDatabase,
    map: SemanticMap,
    last_frame_id: Option<u64>,
    last_roll: f64,
}

/// Detections of one frame, expressed in the frame they will be processed in.
struct WorkingSet<'f> {
    detections: std::borrow::Cow<'f, [Detection]>,
    /// Boxes as reported by the detector, when they are in the original frame.
    original_boxes: Option<&'f [Detection]>,
    roll: f64,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, db: ScaleDatabase) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let map = SemanticMap::for_database(cfg.map, &db)?;
        Ok(Self { cfg, db, map, last_frame_id: None, last_roll: 0.0 })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn map(&self) -> &SemanticMap {
        &self.map
    }

    pub fn scale_db(&self) -> &ScaleDatabase {
        &self.db
    }

    pub fn snapshot(&self) -> MapSnapshot {
        self.map.snapshot()
    }

    /// Roll for this frame; near-vertical optical axes reuse the previous roll.
    fn frame_roll(&mut self, frame: &CameraFrame) -> Result<f64, PipelineError> {
        let oc = roll_from_gravity(&frame.gravity)
            .map_err(|source| PipelineError::Geometry { frame_id: frame.frame_id, source })?;
        if !oc.degenerate {
            self.last_roll = oc.roll;
        }
        Ok(self.last_roll)
    }

    fn working_set<'f>(&self, frame: &'f CameraFrame, roll: f64) -> WorkingSet<'f> {
        use std::borrow::Cow;
        if self.cfg.enable_oc {
            if let Some(corrected) = &frame.corrected_detections {
                return WorkingSet { detections: Cow::Borrowed(corrected), original_boxes: None, roll };
            }
            return match frame.detection_frame {
                DetectionFrame::Corrected => {
                    WorkingSet { detections: Cow::Borrowed(&frame.detections), original_boxes: None, roll }
                }
                DetectionFrame::Original => {
                    let moved = frame
                        .detections
                        .iter()
                        .map(|d| Detection {
                            bbox: rotate_bbox_hull(&d.bbox, roll, &frame.intrinsics, BoxDirection::ToCorrected),
                            ..*d
                        })
                        .collect();
                    WorkingSet { detections: Cow::Owned(moved), original_boxes: Some(&frame.detections), roll }
                }
            };
        }
        match frame.detection_frame {
            DetectionFrame::Original => WorkingSet {
                detections: Cow::Borrowed(&frame.detections),
                original_boxes: Some(&frame.detections),
                roll: 0.0,
            },
            DetectionFrame::Corrected => {
                WorkingSet { detections: Cow::Borrowed(&frame.detections), original_boxes: None, roll }
            }
        }
    }

    pub fn process_frame(&mut self, frame: &CameraFrame) -> Result<FrameResult, PipelineError> {
        if let Some(previous) = self.last_frame_id {
            if frame.frame_id <= previous {
                return Err(PipelineError::OutOfOrder { previous, got: frame.frame_id });
            }
        }
        let roll = self.frame_roll(frame)?;
        let work = self.working_set(frame, roll);
        for det in work.detections.iter() {
            if self.db.get(det.label).is_none() {
                return Err(PipelineError::UnknownLabel { frame_id: frame.frame_id, label: det.label });
            }
        }

        let needs_points = self.cfg.enable_sf || self.cfg.enable_osm;
        let projected = needs_points.then(|| ProjectedPoints::new(frame, work.roll));
        let camera = frame.pose.position();

        let mut outputs = Vec::with_capacity(work.detections.len());
        let mut diagnostics = Vec::with_capacity(work.detections.len());
        for (i, det) in work.detections.iter().enumerate() {
            let est: Option<ScaleEstimate> = projected.as_ref().and_then(|p| p.estimate(&det.bbox));
            let p_scale = if self.cfg.enable_sf {
                scale_filter_prob(est.as_ref(), det.label, &self.db).map_err(MapError::from)?
            } else {
                1.0
            };
            let p_map = match (&est, self.cfg.enable_osm) {
                (Some(e), true) => {
                    let op = ObjectPoint {
                        loc: e.loc,
                        label: det.label,
                        view: view_direction(&camera, &e.loc),
                        scale: scale_bucket(e.d),
                        p_l: det.p_l,
                    };
                    self.map.fuse(&op, &self.db)?;
                    self.map.map_probability(&op, &self.db)?
                }
                _ => 1.0,
            };
            let bbox = match work.original_boxes {
                Some(orig) => orig[i].bbox,
                None => rotate_bbox_hull(&det.bbox, work.roll, &frame.intrinsics, BoxDirection::ToOriginal),
            };
            outputs.push(ScoredDetection { label: det.label, p: p_scale * p_map * det.p_l, bbox });
            diagnostics.push(DetectionDiagnostics {
                p_l: det.p_l,
                p_scale,
                p_map,
                d_w: est.map(|e| e.d_w),
                d_h: est.map(|e| e.d_h),
                d: est.map(|e| e.d),
                roll: work.roll,
            });
        }
        self.last_frame_id = Some(frame.frame_id);
        Ok(FrameResult { frame_id: frame.frame_id, outputs, diagnostics })
    }
}

/// Unit direction from the camera to the object; falls back to +z when the
/// two coincide.
fn view_direction(camera: &crate::geometry::Vec3, loc: &crate::geometry::Vec3) -> crate::geometry::Vec3 {
    (loc - camera).try_normalize(1e-12).unwrap_or_else(crate::geometry::Vec3::z)
}

/// Runs a whole session through a fresh pipeline.
pub fn run_session<I>(
    frames: I,
    cfg: PipelineConfig,
    db: ScaleDatabase,
) -> Result<(Vec<FrameResult>, MapSnapshot), PipelineError>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<CameraFrame>,
{
    let mut pipeline = Pipeline::new(cfg, db)?;
    let results = frames
        .into_iter()
        .map(|f| pipeline.process_frame(std::borrow::Borrow::borrow(&f)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((results, pipeline.snapshot()))
}
