//! Declarative inputs of the session generator. All specs load from TOML.

use serde::{Deserialize, Serialize};

use crate::category::{CategoryDict, CategoryId};
use crate::geometry::{CameraIntrinsics, Vec3};
use crate::scale::ScaleDatabase;

use super::SimError;

/// Axis-aligned room volume, meters, world z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }
}

/// A box-shaped object. `dims` is `(w, h, depth)`: `w` along world x, `h`
/// along world z (up), `depth` along world y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub category: String,
    pub center: [f64; 3],
    pub dims: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub name: String,
    pub bounds: Bounds,
    pub objects: Vec<ObjectSpec>,
    /// Static free-space feature points per cubic meter.
    #[serde(default)]
    pub clutter_density: f64,
    /// Static floor feature points per square meter.
    #[serde(default)]
    pub floor_density: f64,
}

/// Scene object with its category resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub label: CategoryId,
    pub center: Vec3,
    /// Half extents along world x, y, z.
    pub half: Vec3,
}

impl SceneObject {
    pub fn min(&self) -> Vec3 {
        self.center - self.half
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.half
    }

    pub fn contains(&self, p: &Vec3, margin: f64) -> bool {
        (0..3).all(|a| (p[a] - self.center[a]).abs() <= self.half[a] + margin)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (lo, hi) = (self.min(), self.max());
        std::array::from_fn(|i| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
    }
}

impl SceneSpec {
    /// Checks the scene and resolves category names.
    pub fn resolve(&self, dict: &CategoryDict, db: &ScaleDatabase) -> Result<Vec<SceneObject>, SimError> {
        let b = &self.bounds;
        if (0..3).any(|a| !(b.min[a] < b.max[a])) {
            return Err(SimError::Spec("scene bounds must have min < max on every axis".into()));
        }
        if !(self.clutter_density >= 0.0 && self.floor_density >= 0.0) {
            return Err(SimError::Spec("point densities must be non-negative".into()));
        }
        if self.objects.is_empty() {
            return Err(SimError::Spec("scene has no objects".into()));
        }
        let mut out = Vec::with_capacity(self.objects.len());
        for (i, o) in self.objects.iter().enumerate() {
            let what = format!("object {i} ({})", o.category);
            let label = dict.id(&o.category).ok_or_else(|| SimError::Spec(format!("{what}: unknown category")))?;
            let entry = db.get(label).ok_or_else(|| SimError::Spec(format!("{what}: category missing from scale database")))?;
            let [w, h, depth] = o.dims;
            if !(w > 0.0 && h > 0.0 && depth > 0.0) {
                return Err(SimError::Spec(format!("{what}: dimensions must be positive")));
            }
            let footprint = w.max(depth);
            if !(entry.min_h..=entry.max_h).contains(&h) || !(entry.min_w..=entry.max_w).contains(&footprint) {
                return Err(SimError::Spec(format!(
                    "{what}: size {footprint}x{h} m lies outside the category's scale bounds"
                )));
            }
            let obj = SceneObject {
                label,
                center: Vec3::from(o.center),
                half: Vec3::new(w / 2.0, depth / 2.0, h / 2.0),
            };
            if !b.contains(&obj.min()) || !b.contains(&obj.max()) {
                return Err(SimError::Spec(format!("{what}: extends outside the scene bounds")));
            }
            out.push(obj);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// Circle around the target at a fixed height.
    Orbit { radius: f64, height: f64, start_deg: f64, sweep_deg: f64 },
    /// Back-and-forth rows parallel to world x.
    Lawnmower { x_range: [f64; 2], y_range: [f64; 2], rows: usize, height: f64 },
}

/// Device roll per frame, degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RollProfile {
    Constant {
        deg: f64,
    },
    /// Piecewise-constant holds with a small sinusoidal wobble on top.
    Steps {
        values_deg: Vec<f64>,
        segment_frames: usize,
        #[serde(default)]
        wobble_deg: f64,
        #[serde(default = "default_wobble_period")]
        wobble_period: f64,
    },
    Sine {
        amplitude_deg: f64,
        period_frames: f64,
        #[serde(default)]
        offset_deg: f64,
    },
}

fn default_wobble_period() -> f64 {
    20.0
}

impl RollProfile {
    pub fn roll_deg(&self, frame: usize) -> f64 {
        let tau = std::f64::consts::TAU;
        match self {
            RollProfile::Constant { deg } => *deg,
            RollProfile::Steps { values_deg, segment_frames, wobble_deg, wobble_period } => {
                let base = values_deg[(frame / segment_frames) % values_deg.len()];
                base + wobble_deg * (tau * frame as f64 / wobble_period).sin()
            }
            RollProfile::Sine { amplitude_deg, period_frames, offset_deg } => {
                offset_deg + amplitude_deg * (tau * frame as f64 / period_frames).sin()
            }
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = match self {
            RollProfile::Constant { deg } => deg.is_finite(),
            RollProfile::Steps { values_deg, segment_frames, wobble_deg, wobble_period } => {
                !values_deg.is_empty()
                    && values_deg.iter().all(|v| v.is_finite())
                    && *segment_frames > 0
                    && wobble_deg.is_finite()
                    && *wobble_period > 0.0
            }
            RollProfile::Sine { amplitude_deg, period_frames, offset_deg } => {
                amplitude_deg.is_finite() && *period_frames > 0.0 && offset_deg.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Spec("invalid roll profile".into()))
        }
    }
}

pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics { fx: 400.0, fy: 400.0, cx: 240.0, cy: 240.0, width: 480, height: 480 }
}

fn default_interval() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub n_frames: usize,
    /// Seconds between frames.
    #[serde(default = "default_interval")]
    pub frame_interval: f64,
    /// Look-at point; the centroid of the scene objects when absent.
    #[serde(default)]
    pub target: Option<[f64; 3]>,
    pub path: PathSpec,
    pub roll: RollProfile,
    #[serde(default = "default_camera")]
    pub camera: CameraIntrinsics,
}

impl TrajectorySpec {
    pub(crate) fn validate(&self) -> Result<(), SimError> {
        if self.n_frames == 0 {
            return Err(SimError::Spec("trajectory needs at least one frame".into()));
        }
        if !(self.frame_interval > 0.0) {
            return Err(SimError::Spec("frame_interval must be positive".into()));
        }
        match &self.path {
            PathSpec::Orbit { radius, height, start_deg, sweep_deg } => {
                if !(*radius > 0.0) || ![height, start_deg, sweep_deg].iter().all(|v| v.is_finite()) {
                    return Err(SimError::Spec("orbit needs a positive radius and finite angles".into()));
                }
            }
            PathSpec::Lawnmower { x_range, y_range, rows, height } => {
                if *rows == 0 || !(x_range[0] < x_range[1]) || !(y_range[0] <= y_range[1]) || !height.is_finite() {
                    return Err(SimError::Spec("lawnmower needs rows > 0 and ordered ranges".into()));
                }
            }
        }
        self.roll.validate()?;
        self.camera.validate().map_err(|e| SimError::Spec(format!("camera: {e}")))
    }
}

/// Beta-distributed score mapped linearly onto `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreBand {
    pub alpha: f64,
    pub beta: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ScoreBand {
    pub const fn fixed(p: f64) -> Self {
        Self { alpha: 1.0, beta: 1.0, lo: p, hi: p }
    }

    fn validate(&self, what: &str) -> Result<(), SimError> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.lo > 0.0 && self.lo <= self.hi && self.hi <= 1.0) {
            return Err(SimError::Spec(format!("{what}: need alpha, beta > 0 and 0 < lo <= hi <= 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionRule {
    pub from: String,
    pub to: String,
    pub prob: f64,
}

/// Degradation of the uncorrected detector as the device rolls, given at 90
/// degrees and scaled linearly with `min(|roll|, 90) / 90`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollPenalty {
    /// Added miss probability.
    pub miss_at_90: f64,
    /// Relative growth of box width and height.
    pub inflation_at_90: f64,
    /// Added probability of a label swap to another scene category.
    pub confusion_at_90: f64,
}

/// Which detector outputs a generated frame carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionStreams {
    /// Detector run on the raw image only.
    Original,
    /// Detector run on the orientation-corrected image only.
    Corrected,
    /// Both; the raw stream is the frame's primary detection list.
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorNoiseModel {
    pub base_miss_rate: f64,
    /// Per-edge Gaussian jitter, pixels.
    pub bbox_jitter_sigma: f64,
    pub label_confusion: Vec<ConfusionRule>,
    /// Expected planted false positives per frame (Poisson).
    pub fp_rate: f64,
    /// Range of implausible metric sizes drawn for planted false positives, meters.
    pub fp_scale_range: [f64; 2],
    pub roll_penalty: RollPenalty,
    pub tp_score: ScoreBand,
    pub confusion_score: ScoreBand,
    pub fp_score: ScoreBand,
    /// Gaussian noise on sparse points, meters.
    pub point_sigma: f64,
    /// Surface samples per object per frame.
    pub points_per_object: usize,
    pub max_detections: usize,
    pub streams: DetectionStreams,
    pub rng_seed: u64,
}

impl Default for DetectorNoiseModel {
    fn default() -> Self {
        Self {
            base_miss_rate: 0.1,
            bbox_jitter_sigma: 3.0,
            label_confusion: Vec::new(),
            fp_rate: 1.0,
            fp_scale_range: [0.03, 8.0],
            roll_penalty: RollPenalty { miss_at_90: 0.35, inflation_at_90: 0.25, confusion_at_90: 0.2 },
            tp_score: ScoreBand { alpha: 5.0, beta: 2.0, lo: 0.3, hi: 1.0 },
            confusion_score: ScoreBand { alpha: 2.0, beta: 2.0, lo: 0.2, hi: 0.7 },
            fp_score: ScoreBand { alpha: 2.0, beta: 2.0, lo: 0.3, hi: 0.9 },
            point_sigma: 0.01,
            points_per_object: 20,
            max_detections: 10,
            streams: DetectionStreams::Both,
            rng_seed: 0,
        }
    }
}

/// Confusion rule with categories resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ResolvedConfusion {
    pub from: CategoryId,
    pub to: CategoryId,
    pub prob: f64,
}

impl DetectorNoiseModel {
    /// A detector that reports every visible object exactly, with score 1.
    pub fn noiseless() -> Self {
        Self {
            base_miss_rate: 0.0,
            bbox_jitter_sigma: 0.0,
            label_confusion: Vec::new(),
            fp_rate: 0.0,
            roll_penalty: RollPenalty::default(),
            tp_score: ScoreBand::fixed(1.0),
            point_sigma: 0.0,
            ..Self::default()
        }
    }

    pub(crate) fn resolve(&self, dict: &CategoryDict, db: &ScaleDatabase) -> Result<Vec<ResolvedConfusion>, SimError> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        let rp = &self.roll_penalty;
        if !prob(self.base_miss_rate) || !prob(rp.miss_at_90) || !prob(rp.confusion_at_90) {
            return Err(SimError::Spec("miss and confusion probabilities must lie in [0, 1]".into()));
        }
        if !(self.bbox_jitter_sigma >= 0.0 && self.fp_rate >= 0.0 && self.point_sigma >= 0.0 && rp.inflation_at_90 >= 0.0) {
            return Err(SimError::Spec("noise magnitudes must be non-negative".into()));
        }
        let [lo, hi] = self.fp_scale_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(SimError::Spec("fp_scale_range must satisfy 0 < lo < hi".into()));
        }
        if self.max_detections == 0 {
            return Err(SimError::Spec("max_detections must be at least 1".into()));
        }
        self.tp_score.validate("tp_score")?;
        self.confusion_score.validate("confusion_score")?;
        self.fp_score.validate("fp_score")?;

        let mut out = Vec::new();
        for r in &self.label_confusion {
            let id = |name: &str| {
                dict.id(name)
                    .filter(|&id| db.get(id).is_some())
                    .ok_or_else(|| SimError::Spec(format!("confusion rule: unknown category '{name}'")))
            };
            if !prob(r.prob) {
                return Err(SimError::Spec(format!("confusion {} -> {}: probability outside [0, 1]", r.from, r.to)));
            }
            out.push(ResolvedConfusion { from: id(&r.from)?, to: id(&r.to)?, prob: r.prob });
        }
        for from in out.iter().map(|r| r.from) {
            let total: f64 = out.iter().filter(|r| r.from == from).map(|r| r.prob).sum();
            if total > 1.0 + 1e-12 {
                return Err(SimError::Spec(format!("confusion probabilities for category {from} sum above 1")));
            }
        }
        Ok(out)
    }
}
