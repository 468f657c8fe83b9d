//! COCO-style box detection metrics.
//!
//! Follows the COCO protocol: AP is the 101-point interpolated precision
//! averaged over IoU thresholds 0.50:0.05:0.95 and over every category that has
//! ground truth; size buckets use areas below 32², between 32² and 96², and
//! above 96² pixels. Buckets or categories without ground truth are left out of
//! the means rather than counted as zero.
//!
//! One deviation from pycocotools: the detection budget (`max_dets`) applies
//! per frame across all categories.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::category::CategoryId;
use crate::geometry::BBox;
use crate::pipeline::{FrameResult, ScoredDetection};

pub const SMALL_AREA: f64 = 32.0 * 32.0;
pub const LARGE_AREA: f64 = 96.0 * 96.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("frame {0} has results but no ground truth")]
    MissingGroundTruth(u64),
    #[error("frame {0} has ground truth but no results")]
    MissingResults(u64),
    #[error("frame {0} appears more than once")]
    DuplicateFrame(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub label: CategoryId,
    pub bbox: BBox,
    /// Pixel area, `w * h` of the box.
    pub area: f64,
}

impl GtBox {
    pub fn new(label: CategoryId, bbox: BBox) -> Self {
        Self { label, bbox, area: bbox.area() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub frame_id: u64,
    pub boxes: Vec<GtBox>,
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let Some(inter) = a.intersection(b) else {
        return 0.0;
    };
    let i = inter.area();
    let union = a.area() + b.area() - i;
    if union <= 0.0 {
        0.0
    } else {
        i / union
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchFlag {
    /// Matched the ground-truth box at this index.
    TruePositive(usize),
    FalsePositive,
    /// Outside the per-frame detection budget.
    Skipped,
}

/// Indices of `dets` by descending score; ties keep input order.
fn score_order(dets: &[ScoredDetection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].p.total_cmp(&dets[a].p));
    order
}

/// Greedy COCO matching for one frame.
///
/// Detections are visited by descending score (ties in input order); each one
/// claims the unmatched same-category ground truth with the highest IoU at or
/// above `iou_thresh`, preferring the lowest index on IoU ties. Only the
/// `max_dets` best-scored detections take part. Flags are in input order.
pub fn match_detections(
    dets: &[ScoredDetection],
    gts: &GroundTruthFrame,
    iou_thresh: f64,
    max_dets: usize,
) -> Vec<MatchFlag> {
    let ignore = vec![false; gts.boxes.len()];
    let mut flags = vec![MatchFlag::Skipped; dets.len()];
    for (di, m) in greedy_match(dets, &gts.boxes, &ignore, iou_thresh, max_dets) {
        flags[di] = match m {
            Some(g) => MatchFlag::TruePositive(g),
            None => MatchFlag::FalsePositive,
        };
    }
    flags
}

/// Core matcher. Ignored ground truth can absorb a detection but is only used
/// when no regular box qualifies. Returns `(detection index, matched gt)` in
/// visiting order.
fn greedy_match(
    dets: &[ScoredDetection],
    gts: &[GtBox],
    gt_ignore: &[bool],
    iou_thresh: f64,
    max_dets: usize,
) -> Vec<(usize, Option<usize>)> {
    let mut order = score_order(dets);
    order.truncate(max_dets);
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::with_capacity(order.len());
    for di in order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for pass_ignored in [false, true] {
            for (gi, gt) in gts.iter().enumerate() {
                if taken[gi] || gt.label != det.label || gt_ignore[gi] != pass_ignored {
                    continue;
                }
                let o = iou(&det.bbox, &gt.bbox);
                if o >= iou_thresh && best.is_none_or(|(_, b)| o > b) {
                    best = Some((gi, o));
                }
            }
            if best.is_some() {
                break;
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
        }
        out.push((di, best.map(|(g, _)| g)));
    }
    out
}

/// 101-point interpolated average precision.
///
/// `entries` holds `(score, is_true_positive)` pairs; they are ranked by
/// descending score, ties keeping input order. `None` when `n_gt == 0`.
pub fn average_precision(entries: &[(f64, bool)], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[b].0.total_cmp(&entries[a].0));

    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &i in &order {
        if entries[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    // Precision envelope: best precision at any recall to the right.
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for r in recall_thresholds() {
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    Some(sum / 101.0)
}

fn recall_thresholds() -> impl Iterator<Item = f64> {
    (0..=100).map(|i| i as f64 * 0.01)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub iou_thresholds: Vec<f64>,
    /// Detection budget per frame for AP and the size-bucketed recalls.
    pub ap_max_dets: usize,
    /// Detection budget per frame for the headline recall (AR@10).
    pub ar_max_dets: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { iou_thresholds: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(), ap_max_dets: 100, ar_max_dets: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub fn contains(&self, area: f64) -> bool {
        match self {
            AreaRange::All => true,
            AreaRange::Small => area <= SMALL_AREA,
            AreaRange::Medium => (SMALL_AREA..=LARGE_AREA).contains(&area),
            AreaRange::Large => area >= LARGE_AREA,
        }
    }
}

/// Metrics in [0, 1]; `None` marks an empty bucket.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub ar10: Option<f64>,
    pub ar_s: Option<f64>,
    pub ar_m: Option<f64>,
    pub ar_l: Option<f64>,
}

/// Per-(category, threshold) accumulation for one area range and budget.
struct Accumulated {
    /// precision[k][t], recall[k][t]; `None` when category `k` has no GT in range.
    ap: Vec<Vec<Option<f64>>>,
    recall: Vec<Vec<Option<f64>>>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Pairs result frames with ground-truth frames by id.
fn align<'a>(
    results: &'a [FrameResult],
    gts: &'a [GroundTruthFrame],
) -> Result<Vec<(&'a FrameResult, &'a GroundTruthFrame)>, EvalError> {
    let mut by_id: BTreeMap<u64, &GroundTruthFrame> = BTreeMap::new();
    for g in gts {
        if by_id.insert(g.frame_id, g).is_some() {
            return Err(EvalError::DuplicateFrame(g.frame_id));
        }
    }
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::with_capacity(results.len());
    for r in results {
        if !seen.insert(r.frame_id) {
            return Err(EvalError::DuplicateFrame(r.frame_id));
        }
        let g = by_id.get(&r.frame_id).ok_or(EvalError::MissingGroundTruth(r.frame_id))?;
        pairs.push((r, *g));
    }
    if let Some(&missing) = by_id.keys().find(|id| !seen.contains(id)) {
        return Err(EvalError::MissingResults(missing));
    }
    Ok(pairs)
}

fn accumulate(
    pairs: &[(&FrameResult, &GroundTruthFrame)],
    categories: &[CategoryId],
    area: AreaRange,
    max_dets: usize,
    thresholds: &[f64],
) -> Accumulated {
    let k_index: BTreeMap<CategoryId, usize> = categories.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let nk = categories.len();
    let nt = thresholds.len();
    // entries[k][t]: (score, tp) for non-ignored detections
    let mut entries: Vec<Vec<Vec<(f64, bool)>>> = vec![vec![Vec::new(); nt]; nk];
    let mut n_gt = vec![0usize; nk];

    for (res, gt) in pairs {
        let ignore: Vec<bool> = gt.boxes.iter().map(|b| !area.contains(b.area)).collect();
        for (b, ig) in gt.boxes.iter().zip(&ignore) {
            if let (false, Some(&k)) = (ig, k_index.get(&b.label)) {
                n_gt[k] += 1;
            }
        }
        for (t, &thr) in thresholds.iter().enumerate() {
            for (di, m) in greedy_match(&res.outputs, &gt.boxes, &ignore, thr, max_dets) {
                let det = &res.outputs[di];
                let Some(&k) = k_index.get(&det.label) else {
                    continue;
                };
                let ignored = match m {
                    Some(g) => ignore[g],
                    None => !area.contains(det.bbox.area()),
                };
                if !ignored {
                    entries[k][t].push((det.p, m.is_some()));
                }
            }
        }
    }

    let mut ap = vec![vec![None; nt]; nk];
    let mut recall = vec![vec![None; nt]; nk];
    for k in 0..nk {
        for t in 0..nt {
            ap[k][t] = average_precision(&entries[k][t], n_gt[k]);
            if n_gt[k] > 0 {
                let tp = entries[k][t].iter().filter(|e| e.1).count();
                recall[k][t] = Some(tp as f64 / n_gt[k] as f64);
            }
        }
    }
    Accumulated { ap, recall }
}

/// COCO summary metrics over a session.
pub fn coco_metrics(
    results: &[FrameResult],
    gts: &[GroundTruthFrame],
    params: &EvalParams,
) -> Result<MetricsReport, EvalError> {
    let pairs = align(results, gts)?;
    let categories: Vec<CategoryId> = gts
        .iter()
        .flat_map(|g| g.boxes.iter().map(|b| b.label))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let thr = &params.iou_thresholds;
    let at = |target: f64| thr.iter().position(|&t| (t - target).abs() < 1e-9);

    let all = accumulate(&pairs, &categories, AreaRange::All, params.ap_max_dets, thr);
    let ap_over = |acc: &Accumulated, t: Option<usize>| match t {
        Some(t) => mean(acc.ap.iter().map(|row| row[t])),
        None => None,
    };
    let ap_all = |acc: &Accumulated| mean(acc.ap.iter().flat_map(|row| row.iter().copied()));
    let ar_all = |acc: &Accumulated| mean(acc.recall.iter().flat_map(|row| row.iter().copied()));

    let small = accumulate(&pairs, &categories, AreaRange::Small, params.ap_max_dets, thr);
    let medium = accumulate(&pairs, &categories, AreaRange::Medium, params.ap_max_dets, thr);
    let large = accumulate(&pairs, &categories, AreaRange::Large, params.ap_max_dets, thr);
    let ar_budget = accumulate(&pairs, &categories, AreaRange::All, params.ar_max_dets, thr);

    Ok(MetricsReport {
        ap: ap_all(&all),
        ap50: ap_over(&all, at(0.5)),
        ap75: ap_over(&all, at(0.75)),
        ap_s: ap_all(&small),
        ap_m: ap_all(&medium),
        ap_l: ap_all(&large),
        ar10: ar_all(&ar_budget),
        ar_s: ar_all(&small),
        ar_m: ar_all(&medium),
        ar_l: ar_all(&large),
    })
}

/// Metrics for one ablation row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub metrics: MetricsReport,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Renders the AP and AR tables as aligned text, values in percent.
pub fn format_table(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(4);
    let mut out = String::new();
    out.push_str("AP metrics\n");
    out.push_str(&format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "Data", "AP", "AP.5", "AP.75", "APs", "APm", "APl"
    ));
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
            r.label,
            pct(m.ap),
            pct(m.ap50),
            pct(m.ap75),
            pct(m.ap_s),
            pct(m.ap_m),
            pct(m.ap_l)
        ));
    }
    out.push_str("\nAR metrics\n");
    out.push_str(&format!("{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}\n", "Data", "AR10", "ARs", "ARm", "ARl"));
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}\n",
            r.label,
            pct(m.ar10),
            pct(m.ar_s),
            pct(m.ar_m),
            pct(m.ar_l)
        ));
    }
    out
}
