//! Session logs: a header, then one record per camera frame.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json::write_line;
use super::{check_header, parse_header, parse_record, FormatError, LineReader};
use crate::category::{Category, CategoryDict, CategoryId};
use crate::evalkit::{GroundTruthFrame, GtBox};
use crate::geometry::{BBox, CameraFrame, CameraIntrinsics, Detection, DetectionFrame, Pose, Vec3, GRAVITY_UNIT_TOL};

pub const SESSION_FORMAT: &str = "vidar-session";
pub const SESSION_VERSION: u32 = 1;
/// Accepted deviation of a stored quaternion from unit norm before it is
/// renormalized.
pub const QUATERNION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHeader {
    pub format: String,
    pub version: u32,
    pub quaternion_order: String,
    pub pose_convention: String,
    pub gravity_frame: String,
    pub intrinsics: CameraIntrinsics,
    pub categories: Vec<Category>,
}

impl SessionHeader {
    pub fn new(intrinsics: CameraIntrinsics, categories: &CategoryDict) -> Self {
        Self {
            format: SESSION_FORMAT.to_string(),
            version: SESSION_VERSION,
            quaternion_order: "wxyz".to_string(),
            pose_convention: "world_from_camera".to_string(),
            gravity_frame: "camera".to_string(),
            intrinsics,
            categories: categories.iter().cloned().collect(),
        }
    }

    fn validate(&self, line: u64) -> Result<CategoryDict, FormatError> {
        check_header(line, &self.format, self.version, SESSION_FORMAT, SESSION_VERSION)?;
        let bad = |message: String| FormatError::Header { line, message };
        for (field, value, want) in [
            ("quaternion_order", &self.quaternion_order, "wxyz"),
            ("pose_convention", &self.pose_convention, "world_from_camera"),
            ("gravity_frame", &self.gravity_frame, "camera"),
        ] {
            if value != want {
                return Err(bad(format!("{field} must be '{want}', found '{value}'")));
            }
        }
        self.intrinsics.validate().map_err(|e| bad(e.to_string()))?;
        CategoryDict::new(self.categories.clone()).map_err(|e| bad(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRecord {
    q: [f64; 4],
    t: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    label: CategoryId,
    p: f64,
    bbox: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtRecord {
    label: CategoryId,
    bbox: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame_id: u64,
    timestamp: f64,
    pose: PoseRecord,
    gravity: [f64; 3],
    /// Flat `x y z x y z ...` world coordinates.
    points: Vec<f64>,
    detections: Vec<DetectionRecord>,
    detection_frame: DetectionFrame,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    corrected_detections: Option<Vec<DetectionRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<Vec<GtRecord>>,
}

/// One frame plus optional ground-truth boxes (original image frame).
#[derive(Debug, Clone, PartialEq)]
pub struct SessionFrame {
    pub frame: CameraFrame,
    pub ground_truth: Option<Vec<GtBox>>,
}

impl SessionFrame {
    pub fn ground_truth_frame(&self) -> Option<GroundTruthFrame> {
        self.ground_truth.as_ref().map(|b| GroundTruthFrame { frame_id: self.frame.frame_id, boxes: b.clone() })
    }
}

fn bbox_array(b: &BBox) -> [f64; 4] {
    [b.x, b.y, b.w, b.h]
}

fn detection_records(dets: &[Detection]) -> Vec<DetectionRecord> {
    dets.iter().map(|d| DetectionRecord { label: d.label, p: d.p_l, bbox: bbox_array(&d.bbox) }).collect()
}

/// Writes a session log record by record.
pub struct SessionWriter<W: Write> {
    out: W,
    header: SessionHeader,
}

impl<W: Write> SessionWriter<W> {
    pub fn new(mut out: W, header: SessionHeader) -> std::io::Result<Self> {
        write_line(&mut out, &header)?;
        Ok(Self { out, header })
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    /// Writes one frame; the frame's intrinsics are assumed to match the header.
    pub fn write_frame(&mut self, frame: &CameraFrame, ground_truth: Option<&[GtBox]>) -> std::io::Result<()> {
        debug_assert_eq!(frame.intrinsics, self.header.intrinsics);
        let record = FrameRecord {
            frame_id: frame.frame_id,
            timestamp: frame.timestamp,
            pose: PoseRecord { q: frame.pose.wxyz(), t: frame.pose.translation.into() },
            gravity: frame.gravity.into(),
            points: frame.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
            detections: detection_records(&frame.detections),
            detection_frame: frame.detection_frame,
            corrected_detections: frame.corrected_detections.as_deref().map(detection_records),
            ground_truth: ground_truth
                .map(|g| g.iter().map(|b| GtRecord { label: b.label, bbox: bbox_array(&b.bbox) }).collect()),
        };
        write_line(&mut self.out, &record)
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Streaming session reader. Frames are validated as they are read; memory
/// use does not depend on the number of frames.
pub struct SessionReader<R> {
    lines: LineReader<R>,
    header: SessionHeader,
    dict: CategoryDict,
    last_id: Option<u64>,
    failed: bool,
}

impl SessionReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, FormatError> {
        let file = File::open(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::new(BufReader::new(file))
    }
}

impl<R: BufRead> SessionReader<R> {
    pub fn new(inner: R) -> Result<Self, FormatError> {
        let mut lines = LineReader::new(inner);
        let Some(line) = lines.next_line()? else {
            return Err(FormatError::Header { line: 0, message: "empty session file".to_string() });
        };
        let number = line.number;
        let header: SessionHeader = parse_header(&line, SESSION_FORMAT, SESSION_VERSION)?;
        let dict = header.validate(number)?;
        Ok(Self { lines, header, dict, last_id: None, failed: false })
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn categories(&self) -> &CategoryDict {
        &self.dict
    }

    fn read_frame(&mut self) -> Result<Option<SessionFrame>, FormatError> {
        let Some(line) = self.lines.next_line()? else {
            return Ok(None);
        };
        let number = line.number;
        let rec: FrameRecord = parse_record(&line)?;
        let frame = convert(rec, number, &self.header.intrinsics, &self.dict, self.last_id)?;
        self.last_id = Some(frame.frame.frame_id);
        Ok(Some(frame))
    }
}

impl<R: BufRead> Iterator for SessionReader<R> {
    type Item = Result<SessionFrame, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let r = self.read_frame().transpose();
        if matches!(r, Some(Err(_))) {
            self.failed = true;
        }
        r
    }
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

fn convert(
    rec: FrameRecord,
    line: u64,
    intr: &CameraIntrinsics,
    dict: &CategoryDict,
    last_id: Option<u64>,
) -> Result<SessionFrame, FormatError> {
    let frame_id = rec.frame_id;
    let invalid = |message: String| FormatError::Invalid { line, frame_id, message };
    if let Some(prev) = last_id {
        if frame_id <= prev {
            return Err(invalid(format!("frame_id must increase (previous {prev})")));
        }
    }
    if !rec.timestamp.is_finite() {
        return Err(invalid("timestamp is not finite".to_string()));
    }
    if !finite(&rec.pose.q) || !finite(&rec.pose.t) {
        return Err(invalid("pose has non-finite components".to_string()));
    }
    let pose = Pose::from_wxyz(rec.pose.q, Vec3::from(rec.pose.t), QUATERNION_TOL).map_err(|e| invalid(e.to_string()))?;
    let gravity = Vec3::from(rec.gravity);
    if !finite(&rec.gravity) || (gravity.norm() - 1.0).abs() > GRAVITY_UNIT_TOL {
        return Err(invalid(format!("gravity must be a unit vector (norm {})", gravity.norm())));
    }
    if rec.points.len() % 3 != 0 {
        return Err(invalid(format!("points has {} values, not a multiple of 3", rec.points.len())));
    }
    if !finite(&rec.points) {
        return Err(invalid("points contain non-finite values".to_string()));
    }
    let points = rec.points.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();

    let to_bbox = |b: [f64; 4], what: &str| -> Result<BBox, FormatError> {
        let bbox = BBox::new(b[0], b[1], b[2], b[3]);
        if !finite(&b) {
            return Err(invalid(format!("{what} box has non-finite values")));
        }
        bbox.validate(intr).map_err(|e| invalid(format!("{what} box: {e}")))?;
        Ok(bbox)
    };
    let check_label = |label: CategoryId| -> Result<(), FormatError> {
        if dict.contains(label) {
            Ok(())
        } else {
            Err(invalid(format!("label {label} is not in the header's category list")))
        }
    };
    let detections = |recs: Vec<DetectionRecord>, what: &str| -> Result<Vec<Detection>, FormatError> {
        recs.into_iter()
            .map(|d| {
                check_label(d.label)?;
                if !(d.p > 0.0 && d.p <= 1.0) {
                    return Err(invalid(format!("{what} probability {} outside (0, 1]", d.p)));
                }
                Ok(Detection { label: d.label, p_l: d.p, bbox: to_bbox(d.bbox, what)? })
            })
            .collect()
    };

    let frame = CameraFrame {
        frame_id,
        timestamp: rec.timestamp,
        intrinsics: *intr,
        pose,
        gravity,
        points,
        detections: detections(rec.detections, "detection")?,
        detection_frame: rec.detection_frame,
        corrected_detections: rec.corrected_detections.map(|d| detections(d, "corrected detection")).transpose()?,
    };
    let ground_truth = rec
        .ground_truth
        .map(|g| {
            g.into_iter()
                .map(|b| {
                    check_label(b.label)?;
                    Ok(GtBox::new(b.label, to_bbox(b.bbox, "ground-truth")?))
                })
                .collect::<Result<Vec<_>, FormatError>>()
        })
        .transpose()?;
    Ok(SessionFrame { frame, ground_truth })
}

/// Reads a whole session into memory.
pub fn read_session(path: &Path) -> Result<(SessionHeader, Vec<SessionFrame>), FormatError> {
    let mut reader = SessionReader::open(path)?;
    let frames = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((reader.header, frames))
}
