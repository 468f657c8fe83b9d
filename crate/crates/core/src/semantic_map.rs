//! Online semantic map of "superpoints".
//!
//! Every detection with a metric location becomes an [`ObjectPoint`]. The map
//! fuses it into nearby superpoints, weighting the contribution by how novel its
//! view direction and distance octave are, and then turns the accumulated
//! per-label scores around the observation into a probability factor `p_map`.
//!
//! The map is single-writer: [`SemanticMap::fuse`] and
//! [`SemanticMap::map_probability`] must be called in frame order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::category::CategoryId;
use crate::geometry::{angular_difference, Vec3};
use crate::scale::{ScaleDatabase, ScaleError};
use crate::spatial_grid::SpatialGrid;

/// Largest representable value below one; `p_map` never reaches 1.
pub const P_MAP_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("invalid map config: {0}")]
    InvalidConfig(String),
}

/// Which view/scale differences gate list appends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppendGate {
    /// Re-check against each superpoint's own lists.
    #[default]
    PerSuperpoint,
    /// Use the minimum over all superpoints in the fusion neighbourhood.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Scale-difference normalisation; must equal `1 / s_diff_cap`.
    pub k_s: f64,
    pub s_diff_cap: f64,
    /// Views closer than this (degrees) get zero weight and are not recorded.
    pub view_gate_deg: f64,
    /// Views at least this far (degrees) from every recorded view get full weight.
    pub view_cap_deg: f64,
    /// Bonus added to a label score when the observation lands within the
    /// category's creation radius.
    pub reward: f64,
    pub append_gate: AppendGate,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            k_s: 0.2,
            s_diff_cap: 5.0,
            view_gate_deg: 45.0,
            view_cap_deg: 90.0,
            reward: 1.0,
            append_gate: AppendGate::PerSuperpoint,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<(), MapError> {
        let bad = |m: String| Err(MapError::InvalidConfig(m));
        if !(self.k_s > 0.0 && self.k_s.is_finite()) {
            return bad(format!("k_s must be positive, got {}", self.k_s));
        }
        if (1.0 / self.k_s - self.s_diff_cap).abs() > 1e-9 * self.s_diff_cap.abs().max(1.0) {
            return bad(format!("s_diff_cap ({}) must equal 1/k_s ({})", self.s_diff_cap, 1.0 / self.k_s));
        }
        if !(0.0 <= self.view_gate_deg && self.view_gate_deg < self.view_cap_deg && self.view_cap_deg <= 180.0) {
            return bad(format!(
                "need 0 <= view_gate_deg < view_cap_deg <= 180, got {} and {}",
                self.view_gate_deg, self.view_cap_deg
            ));
        }
        if !(self.reward >= 0.0 && self.reward.is_finite()) {
            return bad(format!("reward must be non-negative, got {}", self.reward));
        }
        Ok(())
    }

    /// View-novelty weight: 0 below the gate, linear up to the cap, then 1.
    pub fn view_weight(&self, v_diff_deg: f64) -> f64 {
        if v_diff_deg < self.view_gate_deg {
            0.0
        } else if v_diff_deg <= self.view_cap_deg {
            (v_diff_deg - self.view_gate_deg) / (self.view_cap_deg - self.view_gate_deg)
        } else {
            1.0
        }
    }

    /// Scale-novelty weight, saturating at `s_diff_cap`.
    pub fn scale_weight(&self, s_diff: f64) -> f64 {
        if s_diff < self.s_diff_cap {
            self.k_s * s_diff
        } else {
            1.0
        }
    }
}

/// One detection lifted to 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectPoint {
    pub loc: Vec3,
    pub label: CategoryId,
    /// Unit direction from the camera to `loc`.
    pub view: Vec3,
    /// Distance octave from [`crate::scale::scale_bucket`].
    pub scale: i32,
    pub p_l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperPoint {
    pub id: u64,
    pub loc: Vec3,
    pub scores: BTreeMap<CategoryId, f64>,
    pub views: Vec<Vec3>,
    pub scales: Vec<i32>,
}

impl SuperPoint {
    fn min_view_diff(&self, view: &Vec3) -> Option<f64> {
        self.views.iter().map(|v| angular_difference(view, v)).min_by(f64::total_cmp)
    }

    fn min_scale_diff(&self, scale: i32) -> Option<f64> {
        self.scales.iter().map(|&s| f64::from((scale - s).abs())).min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    /// Minimum angle (degrees) to any recorded view in the neighbourhood;
    /// `None` when the neighbourhood is empty.
    pub v_diff: Option<f64>,
    /// Minimum octave difference to any recorded scale; `None` when empty.
    pub s_diff: Option<f64>,
    pub w_v: f64,
    pub w_s: f64,
    pub e_in: f64,
}

/// Weights and incoming score for an observation against its fusion set.
///
/// An empty neighbourhood is maximally novel: both weights are 1.
pub fn compute_weights(op: &ObjectPoint, s_in: &[&SuperPoint], cfg: &MapConfig) -> FusionWeights {
    let v_diff = s_in.iter().filter_map(|sp| sp.min_view_diff(&op.view)).min_by(f64::total_cmp);
    let s_diff = s_in.iter().filter_map(|sp| sp.min_scale_diff(op.scale)).min_by(f64::total_cmp);
    let w_v = v_diff.map_or(1.0, |v| cfg.view_weight(v));
    let w_s = s_diff.map_or(1.0, |s| cfg.scale_weight(s));
    FusionWeights { v_diff, s_diff, w_v, w_s, e_in: (w_v + w_s) / 2.0 * op.p_l }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseOutcome {
    /// Superpoints whose scores were updated, ascending.
    pub updated: Vec<u64>,
    pub created: Option<u64>,
    pub weights: FusionWeights,
}

/// Id-ordered dump of every superpoint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapSnapshot {
    pub superpoints: Vec<SuperPoint>,
}

#[derive(Debug, Clone)]
pub struct SemanticMap {
    superpoints: Vec<SuperPoint>,
    grid: SpatialGrid,
    cfg: MapConfig,
}

impl SemanticMap {
    pub fn new(cfg: MapConfig, cell_size: f64) -> Result<Self, MapError> {
        cfg.validate()?;
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(MapError::InvalidConfig(format!("cell size must be positive, got {cell_size}")));
        }
        Ok(Self { superpoints: Vec::new(), grid: SpatialGrid::new(cell_size), cfg })
    }

    /// Map whose grid cell equals the largest fuse radius in `db`.
    pub fn for_database(cfg: MapConfig, db: &ScaleDatabase) -> Result<Self, MapError> {
        let cell = db.max_fuse_radius();
        Self::new(cfg, if cell > 0.0 { cell } else { 1.0 })
    }

    pub fn config(&self) -> &MapConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.superpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.superpoints.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&SuperPoint> {
        self.superpoints.get(id as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SuperPoint> {
        self.superpoints.iter()
    }

    /// Ids of superpoints with `|loc - center| <= radius`, ascending.
    pub fn query_radius(&self, center: &Vec3, radius: f64) -> Vec<u64> {
        self.grid.query(center, radius).into_iter().map(|i| i as u64).collect()
    }

    /// Fuses one observation into the map.
    ///
    /// Every superpoint within the category's fuse radius receives the incoming
    /// score (plus the reward when it is also within the creation radius). A new
    /// superpoint is created when none lay within the creation radius before
    /// this call.
    pub fn fuse(&mut self, op: &ObjectPoint, db: &ScaleDatabase) -> Result<FuseOutcome, MapError> {
        let entry = db.require(op.label)?;
        let (fuse_r, create_r) = (entry.fuse_radius(), entry.create_radius());
        let s_in = self.query_radius(&op.loc, fuse_r);
        let weights = {
            let members: Vec<&SuperPoint> = s_in.iter().map(|&id| &self.superpoints[id as usize]).collect();
            compute_weights(op, &members, &self.cfg)
        };

        let cfg = self.cfg;
        let mut near_existing = false;
        for &id in &s_in {
            let sp = &mut self.superpoints[id as usize];
            let dist = (op.loc - sp.loc).norm();
            assert!(dist <= fuse_r, "fusion set member beyond fuse radius");
            let bonus = if dist <= create_r {
                near_existing = true;
                cfg.reward
            } else {
                0.0
            };
            *sp.scores.entry(op.label).or_insert(0.0) += weights.e_in + bonus;

            let (v_diff, s_diff) = match cfg.append_gate {
                AppendGate::PerSuperpoint => (sp.min_view_diff(&op.view), sp.min_scale_diff(op.scale)),
                AppendGate::Pooled => (weights.v_diff, weights.s_diff),
            };
            if v_diff.is_none_or(|v| v >= cfg.view_gate_deg) {
                sp.views.push(op.view);
            }
            if s_diff.is_none_or(|s| s >= 1.0) {
                sp.scales.push(op.scale);
            }
        }

        let created = (!near_existing).then(|| {
            let id = self.superpoints.len() as u64;
            let idx = self.grid.insert(op.loc);
            debug_assert_eq!(idx as u64, id);
            self.superpoints.push(SuperPoint {
                id,
                loc: op.loc,
                scores: BTreeMap::from([(op.label, weights.e_in)]),
                views: vec![op.view],
                scales: vec![op.scale],
            });
            id
        });

        Ok(FuseOutcome { updated: s_in, created, weights })
    }

    /// Probability factor in [0.5, 1) for an observation that was just fused.
    pub fn map_probability(&self, op: &ObjectPoint, db: &ScaleDatabase) -> Result<f64, MapError> {
        let create_r = db.require(op.label)?.create_radius();
        let mut own_max = 0.0_f64;
        let mut other_max = 0.0_f64;
        for id in self.query_radius(&op.loc, create_r) {
            for (&label, &score) in &self.superpoints[id as usize].scores {
                if label == op.label {
                    own_max = own_max.max(score);
                } else {
                    other_max = other_max.max(score);
                }
            }
        }
        Ok(sigmoid_margin(own_max, other_max))
    }

    pub fn snapshot(&self) -> MapSnapshot {
        MapSnapshot { superpoints: self.superpoints.clone() }
    }

    /// Checks that the grid indexes exactly the stored superpoints.
    pub fn index_consistent(&self) -> bool {
        self.grid.len() == self.superpoints.len()
            && self.grid.indexed_count() == self.superpoints.len()
            && self.superpoints.iter().enumerate().all(|(i, sp)| sp.id == i as u64 && self.grid.position(i) == sp.loc)
    }
}

/// `1 / (1 + exp(other - own))` when `own >= other`, otherwise 0.5.
pub fn sigmoid_margin(own_max: f64, other_max: f64) -> f64 {
    if own_max >= other_max {
        // Exponent is non-positive here, so exp cannot overflow.
        (1.0 / (1.0 + (other_max - own_max).exp())).min(P_MAP_MAX)
    } else {
        0.5
    }
}
