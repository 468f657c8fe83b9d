//! The five-row module ablation, evaluated over one or more sessions.

use thiserror::Error;

use crate::evalkit::{coco_metrics, EvalError, EvalParams, GroundTruthFrame, ReportRow};
use crate::io::session::SessionFrame;
use crate::pipeline::{run_session, FrameResult, PipelineConfig, PipelineError};
use crate::scale::ScaleDatabase;

#[derive(Debug, Error, PartialEq)]
pub enum AblationError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("session {session}, frame {frame_id}: no ground truth")]
    MissingGroundTruth { session: usize, frame_id: u64 },
    #[error("duplicate ablation row label '{0}'")]
    DuplicateRow(String),
}

/// Labelled pipeline configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationMatrix {
    pub rows: Vec<(String, PipelineConfig)>,
}

/// (OC, SF, OSM) switches of SSD, OC+SSD, SF+OC+SSD, OSM+OC+SSD and ALL.
pub const DEFAULT_SWITCHES: [(bool, bool, bool); 5] =
    [(false, false, false), (true, false, false), (true, true, false), (true, false, true), (true, true, true)];

impl Default for AblationMatrix {
    fn default() -> Self {
        Self::from_configs(&PipelineConfig::default(), DEFAULT_SWITCHES)
    }
}

impl AblationMatrix {
    /// Rows sharing `base` except for the module switches.
    pub fn from_configs(base: &PipelineConfig, switches: impl IntoIterator<Item = (bool, bool, bool)>) -> Self {
        let rows = switches
            .into_iter()
            .map(|(oc, sf, osm)| {
                let cfg = PipelineConfig { enable_oc: oc, enable_sf: sf, enable_osm: osm, ..base.clone() };
                (cfg.row_label(), cfg)
            })
            .collect();
        Self { rows }
    }

    pub fn validate(&self) -> Result<(), AblationError> {
        for (i, (label, _)) in self.rows.iter().enumerate() {
            if self.rows[..i].iter().any(|(l, _)| l == label) {
                return Err(AblationError::DuplicateRow(label.clone()));
            }
        }
        Ok(())
    }
}

/// Frame ids of session `s` are shifted by `s << 32` when sessions are pooled.
pub fn pooled_frame_id(session: usize, frame_id: u64) -> u64 {
    ((session as u64) << 32) | frame_id
}

/// Ground truth of every frame, pooled across sessions.
pub fn pooled_ground_truth(sessions: &[&[SessionFrame]]) -> Result<Vec<GroundTruthFrame>, AblationError> {
    let mut out = Vec::new();
    for (s, frames) in sessions.iter().enumerate() {
        for f in frames.iter() {
            let boxes = f
                .ground_truth
                .clone()
                .ok_or(AblationError::MissingGroundTruth { session: s, frame_id: f.frame.frame_id })?;
            out.push(GroundTruthFrame { frame_id: pooled_frame_id(s, f.frame.frame_id), boxes });
        }
    }
    Ok(out)
}

/// Runs `cfg` on each session with a fresh map and pools the results.
pub fn pooled_results(
    sessions: &[&[SessionFrame]],
    cfg: &PipelineConfig,
    db: &ScaleDatabase,
) -> Result<Vec<Vec<FrameResult>>, AblationError> {
    sessions
        .iter()
        .map(|frames| Ok(run_session(frames.iter().map(|f| &f.frame), cfg.clone(), db.clone())?.0))
        .collect()
}

fn pool(per_session: Vec<Vec<FrameResult>>) -> Vec<FrameResult> {
    per_session
        .into_iter()
        .enumerate()
        .flat_map(|(s, rs)| {
            rs.into_iter().map(move |mut r| {
                r.frame_id = pooled_frame_id(s, r.frame_id);
                r
            })
        })
        .collect()
}

pub fn run_ablation(
    sessions: &[&[SessionFrame]],
    matrix: &AblationMatrix,
    db: &ScaleDatabase,
    params: &EvalParams,
) -> Result<Vec<ReportRow>, AblationError> {
    matrix.validate()?;
    let gts = pooled_ground_truth(sessions)?;
    matrix
        .rows
        .iter()
        .map(|(label, cfg)| {
            let results = pool(pooled_results(sessions, cfg, db)?);
            Ok(ReportRow { label: label.clone(), metrics: coco_metrics(&results, &gts, params)? })
        })
        .collect()
}
