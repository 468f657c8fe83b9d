//! Camera and image-plane geometry shared by every stage of the pipeline.
//!
//! Conventions:
//! - Camera frame: x right, y down, z along the optical axis.
//! - Image frame: origin at the top-left pixel corner, u right, v down.
//! - [`Pose`] stores the world-from-camera rotation and the camera origin in world
//!   coordinates.
//! - Gravity is reported in camera coordinates. Zero roll means projected gravity
//!   points along +v (image down).
//!
//! The "corrected" image frame is the original image rotated about its center so
//! that projected gravity points straight down. Only coordinates are transformed;
//! no pixels are resampled.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::category::CategoryId;

pub type Vec3 = Vector3<f64>;

/// Points closer than this to the camera plane are not projected.
pub const Z_NEAR: f64 = 0.05;

/// In-plane gravity magnitude below which the roll is considered undefined
/// (optical axis nearly parallel to gravity).
pub const GRAVITY_DEGENERATE_EPS: f64 = 0.1;

/// Tolerance on the gravity norm accepted by [`roll_from_gravity`].
pub const GRAVITY_UNIT_TOL: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("gravity vector must be unit length (norm {norm:.6})")]
    NonUnitGravity { norm: f64 },
    #[error("bounding box lies entirely outside the {width}x{height} image after transform")]
    EmptyBox { width: u32, height: u32 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("pose rotation is not a unit quaternion (norm {norm:.12})")]
    NonUnitQuaternion { norm: f64 },
}

/// World-from-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vec3::zeros())
    }

    /// Builds a pose from a raw `wxyz` quaternion, rejecting non-unit input.
    pub fn from_wxyz(q: [f64; 4], translation: Vec3, tol: f64) -> Result<Self, GeometryError> {
        let raw = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = raw.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > tol {
            return Err(GeometryError::NonUnitQuaternion { norm });
        }
        Ok(Self::new(UnitQuaternion::from_quaternion(raw), translation))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Camera origin in world coordinates.
    pub fn position(&self) -> Vec3 {
        self.translation
    }

    pub fn world_to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.rotation.inverse_transform_vector(&(p_world - self.translation))
    }

    pub fn camera_to_world(&self, p_cam: &Vec3) -> Vec3 {
        self.rotation.transform_vector(p_cam) + self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidIntrinsics("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Geometric center of the image, the pivot of orientation correction.
    pub fn image_center(&self) -> ImagePoint {
        ImagePoint { u: self.width as f64 / 2.0, v: self.height as f64 / 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

/// Axis-aligned box in pixels: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> ImagePoint {
        ImagePoint { u: self.x + self.w / 2.0, v: self.y + self.h / 2.0 }
    }

    pub fn corners(&self) -> [ImagePoint; 4] {
        [
            ImagePoint { u: self.x, v: self.y },
            ImagePoint { u: self.x1(), v: self.y },
            ImagePoint { u: self.x1(), v: self.y1() },
            ImagePoint { u: self.x, v: self.y1() },
        ]
    }

    /// Strict interior test used when selecting sparse points for a detection.
    pub fn contains_strict(&self, p: &ImagePoint) -> bool {
        p.u > self.x && p.u < self.x1() && p.v > self.y && p.v < self.y1()
    }

    pub fn hull<'a>(points: impl IntoIterator<Item = &'a ImagePoint>) -> Option<BBox> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.u, first.v, first.u, first.v);
        for p in it {
            x0 = x0.min(p.u);
            y0 = y0.min(p.v);
            x1 = x1.max(p.u);
            y1 = y1.max(p.v);
        }
        Some(BBox::from_corners(x0, y0, x1, y1))
    }

    /// Intersection with another box, `None` when the overlap has no area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.x1().min(other.x1());
        let y1 = self.y1().min(other.y1());
        (x1 > x0 && y1 > y0).then(|| BBox::from_corners(x0, y0, x1, y1))
    }

    pub fn image_bounds(intr: &CameraIntrinsics) -> BBox {
        BBox::new(0.0, 0.0, intr.width as f64, intr.height as f64)
    }

    pub fn clip_to_image(&self, intr: &CameraIntrinsics) -> Option<BBox> {
        self.intersection(&BBox::image_bounds(intr))
    }

    pub fn validate(&self, intr: &CameraIntrinsics) -> Result<(), GeometryError> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(GeometryError::InvalidBox(format!(
                "({}, {}, {}, {}) needs finite values and positive extent",
                self.x, self.y, self.w, self.h
            )));
        }
        if self.clip_to_image(intr).is_none() {
            return Err(GeometryError::InvalidBox(format!(
                "({}, {}, {}, {}) does not overlap the image",
                self.x, self.y, self.w, self.h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub label: CategoryId,
    pub p_l: f64,
    pub bbox: BBox,
}

/// Image frame in which a frame's detection boxes are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionFrame {
    Original,
    Corrected,
}

/// Everything the AR framework and the detector report for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub frame_id: u64,
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    /// Unit gravity direction in camera coordinates.
    pub gravity: Vec3,
    /// Sparse world points reported for this frame.
    pub points: Vec<Vec3>,
    pub detections: Vec<Detection>,
    pub detection_frame: DetectionFrame,
    /// Detector output on the orientation-corrected image, when the recorder
    /// ran the detector on both images. Boxes are in the corrected frame.
    pub corrected_detections: Option<Vec<Detection>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationCorrection {
    /// Radians in (-pi, pi]; zero when `degenerate`.
    pub roll: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxDirection {
    ToCorrected,
    ToOriginal,
}

/// Pinhole projection of a world point; `None` when the point is not in front
/// of the camera (camera-space z at or below [`Z_NEAR`]).
pub fn project_point(p_world: &Vec3, pose: &Pose, intr: &CameraIntrinsics) -> Option<ImagePoint> {
    project_camera_point(&pose.world_to_camera(p_world), intr)
}

pub fn project_camera_point(p_cam: &Vec3, intr: &CameraIntrinsics) -> Option<ImagePoint> {
    if p_cam.z <= Z_NEAR {
        return None;
    }
    Some(ImagePoint {
        u: intr.fx * p_cam.x / p_cam.z + intr.cx,
        v: intr.fy * p_cam.y / p_cam.z + intr.cy,
    })
}

/// Roll of the image about its center, estimated from the gravity direction.
pub fn roll_from_gravity(gravity: &Vec3) -> Result<OrientationCorrection, GeometryError> {
    let norm = gravity.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > GRAVITY_UNIT_TOL {
        return Err(GeometryError::NonUnitGravity { norm });
    }
    let in_plane = gravity.x.hypot(gravity.y);
    if in_plane < GRAVITY_DEGENERATE_EPS {
        return Ok(OrientationCorrection { roll: 0.0, degenerate: true });
    }
    let mut roll = gravity.x.atan2(gravity.y);
    // atan2 returns [-pi, pi]; fold -pi onto pi.
    if roll <= -std::f64::consts::PI {
        roll += 2.0 * std::f64::consts::PI;
    }
    Ok(OrientationCorrection { roll, degenerate: false })
}

/// Rotates an image point about the image center. A positive angle maps the
/// original frame into the corrected frame for a roll of the same value.
pub fn rotate_image_point(p: &ImagePoint, angle: f64, intr: &CameraIntrinsics) -> ImagePoint {
    if angle == 0.0 {
        return *p;
    }
    let c = intr.image_center();
    let (s, co) = angle.sin_cos();
    let (du, dv) = (p.u - c.u, p.v - c.v);
    ImagePoint { u: du * co - dv * s + c.u, v: du * s + dv * co + c.v }
}

fn direction_angle(roll: f64, direction: BoxDirection) -> f64 {
    match direction {
        BoxDirection::ToCorrected => roll,
        BoxDirection::ToOriginal => -roll,
    }
}

/// Axis-aligned hull of the rotated box corners, without any bounds check.
pub fn rotate_bbox_hull(bbox: &BBox, roll: f64, intr: &CameraIntrinsics, direction: BoxDirection) -> BBox {
    let angle = direction_angle(roll, direction);
    if angle == 0.0 {
        return *bbox;
    }
    let corners = bbox.corners().map(|c| rotate_image_point(&c, angle, intr));
    BBox::hull(corners.iter()).expect("four corners")
}

/// Moves a box between the original and corrected image frames.
///
/// The result is the hull of the rotated corners, so a round trip grows the box
/// unless the roll is a multiple of 90 degrees.
pub fn transform_bbox(
    bbox: &BBox,
    roll: f64,
    intr: &CameraIntrinsics,
    direction: BoxDirection,
) -> Result<BBox, GeometryError> {
    let out = rotate_bbox_hull(bbox, roll, intr, direction);
    if out.clip_to_image(intr).is_none() {
        return Err(GeometryError::EmptyBox { width: intr.width, height: intr.height });
    }
    Ok(out)
}

/// Angle between two unit vectors in degrees, in [0, 180].
pub fn angular_difference(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 form keeps full precision near 0 and 180 degrees.
    let dot = a.dot(b).clamp(-1.0, 1.0);
    a.cross(b).norm().atan2(dot).to_degrees()
}
