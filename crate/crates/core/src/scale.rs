//! Metric size priors: estimating an object's real extent from sparse points and
//! rejecting detections whose extent is implausible for their category.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::category::{CategoryDict, CategoryId};
use crate::geometry::{project_point, rotate_image_point, BBox, CameraFrame, Detection, ImagePoint, Vec3};

/// Minimum number of sparse points inside a box for a usable median.
pub const MIN_POINTS: usize = 3;
/// Camera-to-object distance is clamped into this range (meters).
pub const DISTANCE_RANGE: (f64, f64) = (0.1, 50.0);
/// Factor applied by the scale filter to out-of-envelope detections.
pub const OUT_OF_RANGE_FACTOR: f64 = 0.5;

/// The default per-category database for the COCO label set.
pub const DEFAULT_SCALE_DB: &str = include_str!("../data/scale_db.csv");

#[derive(Debug, Error, PartialEq)]
pub enum ScaleDbError {
    #[error("scale db header must be `category,min_w,max_w,min_h,max_h`, found `{0}`")]
    BadHeader(String),
    #[error("scale db line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("scale db line {line}: duplicate category {category:?}")]
    Duplicate { line: u64, category: String },
    #[error("scale db line {line}: {category:?} has min > max or non-positive bounds")]
    InvalidBounds { line: u64, category: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScaleError {
    #[error("no scale entry for category {0}")]
    UnknownCategory(CategoryId),
}

/// Real-world size envelope of one category, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEntry {
    pub category: CategoryId,
    pub name: String,
    pub min_w: f64,
    pub max_w: f64,
    pub min_h: f64,
    pub max_h: f64,
}

impl ScaleEntry {
    /// Radius within which map nodes are fused with a new observation.
    pub fn fuse_radius(&self) -> f64 {
        self.max_w.max(self.max_h)
    }

    /// Radius inside which an observation counts as the same map node.
    pub fn create_radius(&self) -> f64 {
        self.min_w.min(self.min_h)
    }

    pub fn contains(&self, d_w: f64, d_h: f64) -> bool {
        self.min_w <= d_w && d_w <= self.max_w && self.min_h <= d_h && d_h <= self.max_h
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScaleDatabase {
    entries: BTreeMap<CategoryId, ScaleEntry>,
    skipped: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct Row {
    category: String,
    min_w: f64,
    max_w: f64,
    min_h: f64,
    max_h: f64,
}

const HEADER: [&str; 5] = ["category", "min_w", "max_w", "min_h", "max_h"];

/// Parses a scale database and binds its category names to `dict` ids.
///
/// Rows naming categories that `dict` does not know are skipped and listed in
/// [`ScaleDatabase::skipped`]. Lines starting with `#` are comments.
pub fn load_scale_db(source: &str, dict: &CategoryDict) -> Result<ScaleDatabase, ScaleDbError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ScaleDbError::BadHeader(e.to_string()))?
        .clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(ScaleDbError::BadHeader(headers.iter().collect::<Vec<_>>().join(",")));
    }

    let mut db = ScaleDatabase::default();
    let mut seen = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| ScaleDbError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| ScaleDbError::Malformed { line, message: e.to_string() })?;
        if !seen.insert(row.category.clone()) {
            return Err(ScaleDbError::Duplicate { line, category: row.category });
        }
        let bounds = [row.min_w, row.max_w, row.min_h, row.max_h];
        let valid = bounds.iter().all(|b| b.is_finite() && *b > 0.0)
            && row.min_w <= row.max_w
            && row.min_h <= row.max_h;
        if !valid {
            return Err(ScaleDbError::InvalidBounds { line, category: row.category });
        }
        let Some(id) = dict.id(&row.category) else {
            db.skipped.push(row.category);
            continue;
        };
        db.entries.insert(
            id,
            ScaleEntry {
                category: id,
                name: row.category,
                min_w: row.min_w,
                max_w: row.max_w,
                min_h: row.min_h,
                max_h: row.max_h,
            },
        );
    }
    Ok(db)
}

impl ScaleDatabase {
    /// The shipped database bound to the COCO dictionary.
    pub fn default_coco() -> Self {
        load_scale_db(DEFAULT_SCALE_DB, &CategoryDict::coco()).expect("shipped scale db is valid")
    }

    pub fn get(&self, id: CategoryId) -> Option<&ScaleEntry> {
        self.entries.get(&id)
    }

    pub fn require(&self, id: CategoryId) -> Result<&ScaleEntry, ScaleError> {
        self.get(id).ok_or(ScaleError::UnknownCategory(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScaleEntry> {
        self.entries.values()
    }

    /// Category names that were present in the source but unknown to the dictionary.
    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }

    /// Largest fuse radius over all entries (0 for an empty database).
    pub fn max_fuse_radius(&self) -> f64 {
        self.iter().map(ScaleEntry::fuse_radius).fold(0.0, f64::max)
    }
}

/// Metric extent of a detection, derived from the sparse points inside its box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimate {
    pub d_w: f64,
    pub d_h: f64,
    /// Camera-to-object distance, clamped into [`DISTANCE_RANGE`].
    pub d: f64,
    /// Coordinate-wise median of the supporting world points.
    pub loc: Vec3,
    pub n_points: usize,
}

/// Frame points projected into a detection image frame.
///
/// `roll` is the rotation between the original image and the frame the boxes
/// are expressed in; zero means original-frame boxes.
#[derive(Debug, Clone)]
pub struct ProjectedPoints<'a> {
    frame: &'a CameraFrame,
    pixels: Vec<(ImagePoint, usize)>,
}

impl<'a> ProjectedPoints<'a> {
    pub fn new(frame: &'a CameraFrame, roll: f64) -> Self {
        let pixels = frame
            .points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let px = project_point(p, &frame.pose, &frame.intrinsics)?;
                Some((rotate_image_point(&px, roll, &frame.intrinsics), i))
            })
            .collect();
        Self { frame, pixels }
    }

    /// Indices of frame points whose projection lies strictly inside `bbox`.
    pub fn inside(&self, bbox: &BBox) -> impl Iterator<Item = usize> + '_ {
        let bbox = *bbox;
        self.pixels.iter().filter(move |(px, _)| bbox.contains_strict(px)).map(|&(_, i)| i)
    }

    pub fn estimate(&self, bbox: &BBox) -> Option<ScaleEstimate> {
        let kept: Vec<Vec3> = self.inside(bbox).map(|i| self.frame.points[i]).collect();
        if kept.len() < MIN_POINTS {
            return None;
        }
        let loc = coordinate_median(&kept);
        let (lo, hi) = DISTANCE_RANGE;
        let d = (self.frame.pose.position() - loc).norm().clamp(lo, hi);
        let intr = &self.frame.intrinsics;
        Some(ScaleEstimate {
            d_w: bbox.w / intr.fx * d,
            d_h: bbox.h / intr.fy * d,
            d,
            loc,
            n_points: kept.len(),
        })
    }
}

/// Estimates the metric width and height of a detection.
///
/// The detection box must be expressed in the frame described by `roll` (see
/// [`ProjectedPoints`]). Returns `None` when fewer than [`MIN_POINTS`] sparse
/// points project strictly inside the box.
pub fn estimate_object_scale(det: &Detection, frame: &CameraFrame, roll: f64) -> Option<ScaleEstimate> {
    ProjectedPoints::new(frame, roll).estimate(&det.bbox)
}

/// Per-axis median; even counts average the two middle values.
pub fn coordinate_median(points: &[Vec3]) -> Vec3 {
    assert!(!points.is_empty(), "median of an empty set");
    let mut out = Vec3::zeros();
    let mut buf: Vec<f64> = Vec::with_capacity(points.len());
    for axis in 0..3 {
        buf.clear();
        buf.extend(points.iter().map(|p| p[axis]));
        out[axis] = median_in_place(&mut buf);
    }
    out
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower_max + upper) / 2.0
    }
}

/// Scale-filter factor: 1 when the estimate fits the category envelope (bounds
/// inclusive) or no estimate exists, [`OUT_OF_RANGE_FACTOR`] otherwise.
pub fn scale_filter_prob(
    est: Option<&ScaleEstimate>,
    category: CategoryId,
    db: &ScaleDatabase,
) -> Result<f64, ScaleError> {
    let entry = db.require(category)?;
    Ok(match est {
        None => 1.0,
        Some(e) if entry.contains(e.d_w, e.d_h) => 1.0,
        Some(_) => OUT_OF_RANGE_FACTOR,
    })
}

/// Distance octave `round(log2 d)`, rounding half away from zero.
///
/// Computed from the binary exponent and mantissa so that doubling `d` always
/// adds exactly one.
pub fn scale_bucket(d: f64) -> i32 {
    debug_assert!(d > 0.0 && d.is_finite());
    if !d.is_normal() {
        return d.log2().round() as i32;
    }
    let bits = d.to_bits();
    let exponent = ((bits >> 52) & 0x7ff) as i32 - 1023;
    let mantissa = f64::from_bits((bits & ((1u64 << 52) - 1)) | (1023u64 << 52));
    // log2(mantissa) is in [0, 1); it rounds up exactly when mantissa >= sqrt(2).
    exponent + i32::from(mantissa >= std::f64::consts::SQRT_2)
}
