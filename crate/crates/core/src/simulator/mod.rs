//! Synthetic AR sessions with ground truth.
//!
//! A session is a pure function of its specs and seed. Randomness comes from
//! ChaCha8 streams keyed by component, frame and item (see [`sub_rng`]), so
//! changing one component or the visibility of one object never shifts the
//! draws of another.
//!
//! Sparse points are sampled on camera-facing object faces and on static room
//! features; points hidden behind another object are dropped.
//!
//! Per frame and object the detector draws, in order: miss uniform, confusion
//! uniform, four edge-jitter normals, true-label score, confusion pick
//! uniform, confused score. The raw and corrected detector streams share
//! these draws, so they differ only through the roll penalty.

pub mod presets;
pub mod scene;
pub mod spec;
pub mod trajectory;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};
use thiserror::Error;

use crate::category::{CategoryDict, CategoryId};
use crate::evalkit::GtBox;
use crate::geometry::{
    project_camera_point, roll_from_gravity, rotate_bbox_hull, rotate_image_point, BBox, BoxDirection, CameraFrame,
    CameraIntrinsics, Detection, DetectionFrame, ImagePoint, Vec3, Z_NEAR,
};
use crate::io::session::{SessionFrame, SessionHeader, SessionWriter};
use crate::scale::{ProjectedPoints, ScaleDatabase, ScaleEntry};

pub use spec::{
    Bounds, ConfusionRule, DetectionStreams, DetectorNoiseModel, ObjectSpec, PathSpec, RollPenalty, RollProfile,
    SceneObject, SceneSpec, ScoreBand, TrajectorySpec,
};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulator spec: {0}")]
    Spec(String),
}

/// Independent random streams, one per generator component.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Component {
    StaticPoints = 1,
    FramePoints = 2,
    Objects = 3,
    FalsePositives = 4,
}

/// Generator for item `item` of frame `frame` within `component`. Each pair
/// owns a disjoint window of 2^16 words of the component's ChaCha stream.
fn sub_rng(seed: u64, component: Component, frame: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(component as u64);
    rng.set_word_pos((((frame as u128) << 24) | item as u128) << 16);
    rng
}

/// Where a generated detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// A scene object, reported with its own or a confused label.
    Object { index: usize, true_label: CategoryId, confused: bool },
    /// Planted false positive; `verified` when the placement was checked to
    /// violate the label's scale bounds with enough points inside.
    Planted { verified: bool },
}

/// Provenance of each detection, aligned with the frame's detection lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameProvenance {
    pub detections: Vec<Provenance>,
    pub corrected: Option<Vec<Provenance>>,
}

#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub header: SessionHeader,
    pub frames: Vec<SessionFrame>,
    pub provenance: Vec<FrameProvenance>,
}

impl SimulatedSession {
    pub fn write_to<W: std::io::Write>(&self, out: W) -> std::io::Result<W> {
        let mut w = SessionWriter::new(out, self.header.clone())?;
        for f in &self.frames {
            w.write_frame(&f.frame, f.ground_truth.as_deref())?;
        }
        w.finish()
    }

    pub fn camera_frames(&self) -> impl Iterator<Item = &CameraFrame> {
        self.frames.iter().map(|f| &f.frame)
    }
}

fn score<R: Rng>(band: &ScoreBand, rng: &mut R) -> f64 {
    let u: f64 = Beta::new(band.alpha, band.beta).expect("validated band").sample(rng);
    let p = band.lo + (band.hi - band.lo) * u;
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Maps an angle in degrees onto [-180, 180].
fn wrap_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Drawn once per (frame, object) and shared by both detector streams.
struct ObjectDraws {
    miss: f64,
    confuse: f64,
    jitter: [f64; 4],
    tp_score: f64,
    confuse_pick: f64,
    confused_score: f64,
}

impl ObjectDraws {
    fn draw<R: Rng>(noise: &DetectorNoiseModel, rng: &mut R) -> Self {
        let miss = rng.random();
        let confuse = rng.random();
        let jitter = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        let tp_score = score(&noise.tp_score, rng);
        let confuse_pick = rng.random();
        let confused_score = score(&noise.confusion_score, rng);
        Self { miss, confuse, jitter, tp_score, confuse_pick, confused_score }
    }
}

fn jittered(b: &BBox, jitter: &[f64; 4], sigma: f64, intr: &CameraIntrinsics) -> Option<BBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (b.x, b.y, b.x1(), b.y1());
    x0 += sigma * jitter[0];
    y0 += sigma * jitter[1];
    x1 += sigma * jitter[2];
    y1 += sigma * jitter[3];
    if x1 - x0 < 1.0 || y1 - y0 < 1.0 {
        return None;
    }
    BBox::from_corners(x0, y0, x1, y1).clip_to_image(intr)
}

fn inflate(b: &BBox, factor: f64) -> BBox {
    if factor == 1.0 {
        return *b;
    }
    let c = b.center();
    let (w, h) = (b.w * factor, b.h * factor);
    BBox::new(c.u - w / 2.0, c.v - h / 2.0, w, h)
}

/// Projection of an object into one frame.
struct ObjectView {
    /// Ground truth: corner hull clipped to the image.
    gt: BBox,
    /// Unclipped corner pixels in the original frame.
    corners: [ImagePoint; 8],
}

fn view_object(obj: &SceneObject, frame: &CameraFrame) -> Option<ObjectView> {
    let intr = &frame.intrinsics;
    let mut corners = [ImagePoint { u: 0.0, v: 0.0 }; 8];
    for (c, p) in corners.iter_mut().zip(obj.corners()) {
        let pc = frame.pose.world_to_camera(&p);
        if pc.z <= Z_NEAR {
            return None;
        }
        *c = project_camera_point(&pc, intr)?;
    }
    let hull = BBox::hull(corners.iter())?;
    let gt = hull.clip_to_image(intr)?;
    if gt.area() < 0.5 * hull.area() || gt.w < 2.0 || gt.h < 2.0 {
        return None;
    }
    Some(ObjectView { gt, corners })
}

/// Streams the frame will carry.
struct Streams {
    original: bool,
    corrected: bool,
}

struct StreamOutput {
    dets: Vec<Detection>,
    prov: Vec<Provenance>,
}

impl StreamOutput {
    fn new() -> Self {
        Self { dets: Vec::new(), prov: Vec::new() }
    }

    fn push(&mut self, d: Detection, p: Provenance) {
        self.dets.push(d);
        self.prov.push(p);
    }

    /// Highest scores first (stable), at most `max` entries.
    fn finish(self, max: usize) -> (Vec<Detection>, Vec<Provenance>) {
        let mut order: Vec<usize> = (0..self.dets.len()).collect();
        order.sort_by(|&a, &b| self.dets[b].p_l.total_cmp(&self.dets[a].p_l));
        order.truncate(max);
        (order.iter().map(|&i| self.dets[i]).collect(), order.iter().map(|&i| self.prov[i]).collect())
    }
}

struct Generator<'a> {
    noise: &'a DetectorNoiseModel,
    objects: &'a [SceneObject],
    scene_labels: Vec<CategoryId>,
    confusions: Vec<spec::ResolvedConfusion>,
    db: &'a ScaleDatabase,
    streams: Streams,
}

impl Generator<'_> {
    fn confusion_target(&self, label: CategoryId, draws: &ObjectDraws, extra: f64) -> Option<CategoryId> {
        let mut acc = 0.0;
        for r in self.confusions.iter().filter(|r| r.from == label) {
            acc += r.prob;
            if draws.confuse < acc {
                return Some(r.to);
            }
        }
        if draws.confuse < acc + extra {
            let others: Vec<CategoryId> = self.scene_labels.iter().copied().filter(|&l| l != label).collect();
            if !others.is_empty() {
                let i = ((draws.confuse_pick * others.len() as f64) as usize).min(others.len() - 1);
                return Some(others[i]);
            }
        }
        None
    }

    fn object_detections(
        &self,
        frame: &CameraFrame,
        frame_idx: u64,
        roll_c: f64,
        severity: f64,
        original: &mut StreamOutput,
        corrected: &mut StreamOutput,
    ) {
        let intr = &frame.intrinsics;
        let sigma = self.noise.bbox_jitter_sigma;
        let pen = &self.noise.roll_penalty;
        for (j, obj) in self.objects.iter().enumerate() {
            let draws = ObjectDraws::draw(self.noise, &mut sub_rng(self.noise.rng_seed, Component::Objects, frame_idx, j as u64));
            let Some(view) = view_object(obj, frame) else {
                continue;
            };
            let emit = |out: &mut StreamOutput, bbox: Option<BBox>, confusion: Option<CategoryId>| {
                let Some(bbox) = bbox else {
                    return;
                };
                let (label, p_l) = match confusion {
                    Some(to) => (to, draws.confused_score),
                    None => (obj.label, draws.tp_score),
                };
                out.push(
                    Detection { label, p_l, bbox },
                    Provenance::Object { index: j, true_label: obj.label, confused: confusion.is_some() },
                );
            };
            if self.streams.corrected && draws.miss >= self.noise.base_miss_rate {
                let rotated = view.corners.map(|c| rotate_image_point(&c, roll_c, intr));
                let bbox = BBox::hull(rotated.iter())
                    .and_then(|b| b.clip_to_image(intr))
                    .and_then(|b| jittered(&b, &draws.jitter, sigma, intr));
                emit(corrected, bbox, self.confusion_target(obj.label, &draws, 0.0));
            }
            if self.streams.original && draws.miss >= self.noise.base_miss_rate + severity * pen.miss_at_90 {
                let bbox = inflate(&view.gt, 1.0 + severity * pen.inflation_at_90)
                    .clip_to_image(intr)
                    .and_then(|b| jittered(&b, &draws.jitter, sigma, intr));
                emit(original, bbox, self.confusion_target(obj.label, &draws, severity * pen.confusion_at_90));
            }
        }
    }

    /// One planted false positive in the frame described by `roll` (0 for the
    /// original frame). The box is sized so the estimated metric extent falls
    /// outside `entry`'s bounds and is checked with the real estimator.
    fn plant<R: Rng>(
        &self,
        frame: &CameraFrame,
        projected: &ProjectedPoints<'_>,
        entry: &ScaleEntry,
        rng: &mut R,
    ) -> (BBox, bool) {
        const ATTEMPTS: usize = 64;
        const PROBE_HALF: f64 = 30.0;
        let intr = &frame.intrinsics;
        let (w_img, h_img) = (intr.width as f64, intr.height as f64);
        let [lo, hi] = self.noise.fp_scale_range;
        let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
        let mut last = BBox::new(w_img / 4.0, h_img / 4.0, w_img / 2.0, h_img / 2.0);
        for _ in 0..ATTEMPTS {
            let u = rng.random_range(0.0..w_img);
            let v = rng.random_range(0.0..h_img);
            let mut size = (rng.random_range(ln_lo..=ln_hi).exp(), rng.random_range(ln_lo..=ln_hi).exp());
            for _ in 0..32 {
                if !entry.contains(size.0, size.1) {
                    break;
                }
                size = (rng.random_range(ln_lo..=ln_hi).exp(), rng.random_range(ln_lo..=ln_hi).exp());
            }
            if entry.contains(size.0, size.1) {
                size.1 = entry.max_h * 2.0;
            }
            let probe = BBox::new(u - PROBE_HALF, v - PROBE_HALF, 2.0 * PROBE_HALF, 2.0 * PROBE_HALF);
            let Some(d) = projected.estimate(&probe).map(|e| e.d) else {
                continue;
            };
            let w_px = (size.0 * intr.fx / d).clamp(6.0, 2.0 * w_img);
            let h_px = (size.1 * intr.fy / d).clamp(6.0, 2.0 * h_img);
            let Some(bbox) = BBox::new(u - w_px / 2.0, v - h_px / 2.0, w_px, h_px).clip_to_image(intr) else {
                continue;
            };
            last = bbox;
            if let Some(est) = projected.estimate(&bbox) {
                if !entry.contains(est.d_w, est.d_h) {
                    return (bbox, true);
                }
            }
        }
        (last, false)
    }

    fn false_positives(
        &self,
        frame: &CameraFrame,
        frame_idx: u64,
        roll_c: f64,
        original: &mut StreamOutput,
        corrected: &mut StreamOutput,
    ) {
        let seed = self.noise.rng_seed;
        let count = if self.noise.fp_rate > 0.0 {
            let mut rng = sub_rng(seed, Component::FalsePositives, frame_idx, 0);
            Poisson::new(self.noise.fp_rate).expect("validated rate").sample(&mut rng) as u64
        } else {
            0
        };
        if count == 0 {
            return;
        }
        // Placement is verified in the corrected frame when that stream exists.
        let place_roll = if self.streams.corrected { roll_c } else { 0.0 };
        let projected = ProjectedPoints::new(frame, place_roll);
        let intr = &frame.intrinsics;
        for k in 0..count {
            let mut rng = sub_rng(seed, Component::FalsePositives, frame_idx, k + 1);
            let label = self.scene_labels[rng.random_range(0..self.scene_labels.len())];
            let p_l = score(&self.noise.fp_score, &mut rng);
            let entry = self.db.get(label).expect("scene labels are in the database");
            let (bbox, verified) = self.plant(frame, &projected, entry, &mut rng);
            let prov = Provenance::Planted { verified };
            if self.streams.corrected {
                corrected.push(Detection { label, p_l, bbox }, prov);
                if self.streams.original {
                    if let Some(b) = rotate_bbox_hull(&bbox, roll_c, intr, BoxDirection::ToOriginal).clip_to_image(intr) {
                        original.push(Detection { label, p_l, bbox: b }, prov);
                    }
                }
            } else {
                original.push(Detection { label, p_l, bbox }, prov);
            }
        }
    }
}

/// Generates a ground-truthed session.
///
/// Categories resolve through the COCO dictionary; every scene category and
/// confusion target must have a scale database entry.
pub fn generate_session(
    scene: &SceneSpec,
    traj: &TrajectorySpec,
    noise: &DetectorNoiseModel,
    db: &ScaleDatabase,
) -> Result<SimulatedSession, SimError> {
    let dict = CategoryDict::coco();
    let objects = scene.resolve(&dict, db)?;
    traj.validate()?;
    let confusions = noise.resolve(&dict, db)?;
    let intr = traj.camera;

    let target = match traj.target {
        Some(t) => Vec3::from(t),
        None => objects.iter().map(|o| o.center).sum::<Vec3>() / objects.len() as f64,
    };
    let mut scene_labels: Vec<CategoryId> = Vec::new();
    for o in &objects {
        if !scene_labels.contains(&o.label) {
            scene_labels.push(o.label);
        }
    }
    let streams = match noise.streams {
        DetectionStreams::Original => Streams { original: true, corrected: false },
        DetectionStreams::Corrected => Streams { original: false, corrected: true },
        DetectionStreams::Both => Streams { original: true, corrected: true },
    };
    let generator = Generator { noise, objects: &objects, scene_labels, confusions, db, streams };

    let statics = scene::static_points(scene, &objects, &mut sub_rng(noise.rng_seed, Component::StaticPoints, 0, 0));
    let mut frames = Vec::with_capacity(traj.n_frames);
    let mut provenance = Vec::with_capacity(traj.n_frames);
    let mut last_roll = 0.0;

    for i in 0..traj.n_frames {
        let position = trajectory::camera_position(traj, &target, i);
        if !scene.bounds.contains(&position) {
            return Err(SimError::Spec(format!("frame {i}: camera leaves the scene bounds")));
        }
        let device_roll_deg = traj.roll.roll_deg(i);
        let pose = trajectory::look_at(&position, &target, device_roll_deg.to_radians())?;
        let gravity = trajectory::gravity_in_camera(&pose);
        // Same rule as the pipeline: degenerate gravity keeps the last roll.
        let oc = roll_from_gravity(&gravity).expect("unit gravity");
        if !oc.degenerate {
            last_roll = oc.roll;
        }
        let roll_c = last_roll;
        let severity = wrap_deg(device_roll_deg).abs().min(90.0) / 90.0;

        let mut rng = sub_rng(noise.rng_seed, Component::FramePoints, i as u64, 0);
        let mut points = Vec::new();
        for (k, obj) in objects.iter().enumerate() {
            if pose.world_to_camera(&obj.center).z > Z_NEAR {
                let samples = scene::surface_samples(obj, &position, noise.points_per_object, &mut rng);
                points.extend(samples.into_iter().filter(|p| !scene::occluded(&position, p, &objects, Some(k))));
            }
        }
        let bounds = BBox::image_bounds(&intr);
        points.extend(statics.iter().copied().filter(|p| {
            project_camera_point(&pose.world_to_camera(p), &intr).is_some_and(|px| bounds.contains_strict(&px))
                && !scene::occluded(&position, p, &objects, None)
        }));
        if noise.point_sigma > 0.0 {
            for p in &mut points {
                let n = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                *p += n * noise.point_sigma;
            }
        }

        let mut frame = CameraFrame {
            frame_id: i as u64,
            timestamp: i as f64 * traj.frame_interval,
            intrinsics: intr,
            pose,
            gravity,
            points,
            detections: Vec::new(),
            detection_frame: DetectionFrame::Original,
            corrected_detections: None,
        };
        let gt: Vec<GtBox> =
            objects.iter().filter_map(|o| view_object(o, &frame).map(|v| GtBox::new(o.label, v.gt))).collect();

        let (mut original, mut corrected) = (StreamOutput::new(), StreamOutput::new());
        generator.object_detections(&frame, i as u64, roll_c, severity, &mut original, &mut corrected);
        generator.false_positives(&frame, i as u64, roll_c, &mut original, &mut corrected);
        let (orig_dets, orig_prov) = original.finish(noise.max_detections);
        let (corr_dets, corr_prov) = corrected.finish(noise.max_detections);

        let prov = match noise.streams {
            DetectionStreams::Original => {
                frame.detections = orig_dets;
                FrameProvenance { detections: orig_prov, corrected: None }
            }
            DetectionStreams::Corrected => {
                frame.detections = corr_dets;
                frame.detection_frame = DetectionFrame::Corrected;
                FrameProvenance { detections: corr_prov, corrected: None }
            }
            DetectionStreams::Both => {
                frame.detections = orig_dets;
                frame.corrected_detections = Some(corr_dets);
                FrameProvenance { detections: orig_prov, corrected: Some(corr_prov) }
            }
        };
        frames.push(SessionFrame { frame, ground_truth: Some(gt) });
        provenance.push(prov);
    }

    Ok(SimulatedSession { header: SessionHeader::new(intr, &dict), frames, provenance })
}
