//! Worked input/output cases for every operation, each a named check.
//!
//! `unit_cases` covers the closed-form examples; `reference_cases` the
//! published constants (size database rows and map weighting parameters).

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::UnitQuaternion;
use rand::Rng;

use super::{exhaustive_match, label, linear_scan, random_map, rng};
use vidar_core::evalkit::{
    average_precision, coco_metrics, iou, match_detections, EvalParams, GroundTruthFrame, GtBox, MatchFlag,
};
use vidar_core::geometry::{
    angular_difference, project_point, roll_from_gravity, transform_bbox, BoxDirection, DetectionFrame,
};
use vidar_core::io::session::{SessionHeader, SessionReader, SessionWriter};
use vidar_core::io::{read_map_dump, write_map_dump, FormatError, ResultsHeader, ResultsWriter};
use vidar_core::pipeline::run_session;
use vidar_core::scale::{
    estimate_object_scale, load_scale_db, scale_bucket, scale_filter_prob, ScaleEstimate, DEFAULT_SCALE_DB,
};
use vidar_core::semantic_map::{compute_weights, sigmoid_margin, MapSnapshot, ObjectPoint, SemanticMap, SuperPoint};
use vidar_core::simulator::{
    generate_session, Bounds, DetectionStreams, DetectorNoiseModel, ObjectSpec, PathSpec, Provenance, RollPenalty,
    RollProfile, SceneSpec, TrajectorySpec,
};
use vidar_core::{
    BBox, CameraFrame, CameraIntrinsics, CategoryDict, Detection, FrameResult, MapConfig, PipelineConfig,
    Pose, ScaleDatabase, ScoredDetection, Vec3,
};

pub type Check = fn() -> Result<(), String>;

pub const TOL: f64 = 1e-9;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= TOL, || format!("{what}: got {got}, want {want}"))
}

fn close_box(got: &BBox, want: &BBox, what: &str) -> Result<(), String> {
    close(got.x, want.x, &format!("{what}.x"))?;
    close(got.y, want.y, &format!("{what}.y"))?;
    close(got.w, want.w, &format!("{what}.w"))?;
    close(got.h, want.h, &format!("{what}.h"))
}

fn intr500() -> CameraIntrinsics {
    CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 250.0, cy: 250.0, width: 500, height: 500 }
}

fn chair_entry_db() -> ScaleDatabase {
    ScaleDatabase::default_coco()
}

fn object_point(loc: Vec3, name: &str, view: Vec3, scale: i32, p_l: f64) -> ObjectPoint {
    ObjectPoint { loc, label: label(name), view, scale, p_l }
}

fn superpoint(views: Vec<Vec3>, scales: Vec<i32>) -> SuperPoint {
    SuperPoint { id: 0, loc: Vec3::zeros(), scores: Default::default(), views, scales }
}

pub fn unit_cases() -> Vec<(&'static str, Check)> {
    vec![
        // geometry
        ("project_point: on-axis point lands on the principal point", || {
            let p = project_point(&Vec3::new(0.0, 0.0, 2.0), &Pose::identity(), &intr500()).ok_or("no projection")?;
            close(p.u, 250.0, "u")?;
            close(p.v, 250.0, "v")
        }),
        ("project_point: u = fx*x/z + cx", || {
            let p = project_point(&Vec3::new(1.0, 0.0, 2.0), &Pose::identity(), &intr500()).ok_or("no projection")?;
            close(p.u, 500.0, "u")
        }),
        ("project_point: behind the camera gives none", || {
            ensure(project_point(&Vec3::new(0.0, 0.0, -1.0), &Pose::identity(), &intr500()).is_none(), || {
                "projected a point behind the camera".into()
            })
        }),
        ("roll_from_gravity: gravity already down", || {
            let r = roll_from_gravity(&Vec3::new(0.0, 1.0, 0.0)).map_err(|e| e.to_string())?;
            ensure(!r.degenerate, || "degenerate".into())?;
            close(r.roll, 0.0, "roll")
        }),
        ("roll_from_gravity: gravity along +x gives pi/2", || {
            let r = roll_from_gravity(&Vec3::new(1.0, 0.0, 0.0)).map_err(|e| e.to_string())?;
            close(r.roll, FRAC_PI_2, "roll")
        }),
        ("roll_from_gravity: camera facing down is degenerate", || {
            let r = roll_from_gravity(&Vec3::new(0.0, 0.0, 1.0)).map_err(|e| e.to_string())?;
            ensure(r.degenerate, || "not degenerate".into())
        }),
        ("transform_bbox: zero roll is the identity", || {
            let b = BBox::new(12.5, 40.0, 33.0, 71.25);
            for dir in [BoxDirection::ToCorrected, BoxDirection::ToOriginal] {
                let t = transform_bbox(&b, 0.0, &intr500(), dir).map_err(|e| e.to_string())?;
                ensure(t == b, || format!("{t:?} != {b:?}"))?;
            }
            Ok(())
        }),
        ("transform_bbox: half turn keeps a centered square", || {
            let s = 80.0;
            let b = BBox::new(250.0 - s / 2.0, 250.0 - s / 2.0, s, s);
            let t = transform_bbox(&b, PI, &intr500(), BoxDirection::ToCorrected).map_err(|e| e.to_string())?;
            close_box(&t, &b, "box")
        }),
        ("transform_bbox: quarter turn swaps width and height about the center", || {
            let i = intr500();
            let b = BBox::new(i.cx - 10.0, i.cy - 20.0, 20.0, 40.0);
            let t = transform_bbox(&b, FRAC_PI_2, &i, BoxDirection::ToCorrected).map_err(|e| e.to_string())?;
            close_box(&t, &BBox::new(i.cx - 20.0, i.cy - 10.0, 40.0, 20.0), "box")
        }),
        ("angular_difference: equal vectors", || close(angular_difference(&Vec3::x(), &Vec3::x()), 0.0, "angle")),
        ("angular_difference: orthogonal vectors", || close(angular_difference(&Vec3::x(), &Vec3::y()), 90.0, "angle")),
        ("angular_difference: opposite vectors", || close(angular_difference(&Vec3::x(), &-Vec3::x()), 180.0, "angle")),
        // scale database and estimation
        ("load_scale_db: inverted bounds are rejected", || {
            let src = "category,min_w,max_w,min_h,max_h\nchair,1.7,0.8,0.3,1.0\n";
            ensure(load_scale_db(src, &CategoryDict::coco()).is_err(), || "accepted min > max".into())
        }),
        ("estimate_object_scale: median of three points sets the depth", || {
            let f = scale_frame(vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.0, 9.0)], 300.0);
            let det = Detection { label: label("chair"), p_l: 1.0, bbox: BBox::new(100.0, 100.0, 150.0, 100.0) };
            let e = estimate_object_scale(&det, &f, 0.0).ok_or("no estimate")?;
            close(e.loc.z, 2.0, "loc depth")?;
            close(e.d, 2.0, "d")
        }),
        ("estimate_object_scale: 150 px at fx 300 and 2 m is 1 m wide", || {
            let f = scale_frame(vec![Vec3::new(0.0, 0.0, 2.0); 3], 300.0);
            let det = Detection { label: label("chair"), p_l: 1.0, bbox: BBox::new(100.0, 100.0, 150.0, 100.0) };
            let e = estimate_object_scale(&det, &f, 0.0).ok_or("no estimate")?;
            close(e.d_w, 1.0, "D_w")
        }),
        ("estimate_object_scale: two points are too few", || {
            let f = scale_frame(vec![Vec3::new(0.0, 0.0, 2.0); 2], 300.0);
            let det = Detection { label: label("chair"), p_l: 1.0, bbox: BBox::new(100.0, 100.0, 150.0, 100.0) };
            ensure(estimate_object_scale(&det, &f, 0.0).is_none(), || "estimated from 2 points".into())
        }),
        ("scale_filter_prob: no estimate is neutral", || {
            let p = scale_filter_prob(None, label("chair"), &chair_entry_db()).map_err(|e| e.to_string())?;
            close(p, 1.0, "p_scale")
        }),
        ("scale_bucket: 1 m is octave 0", || ensure(scale_bucket(1.0) == 0, || format!("{}", scale_bucket(1.0)))),
        ("scale_bucket: 2 m is octave 1", || ensure(scale_bucket(2.0) == 1, || format!("{}", scale_bucket(2.0)))),
        ("scale_bucket: 3 m rounds to octave 2", || ensure(scale_bucket(3.0) == 2, || format!("{}", scale_bucket(3.0)))),
        // spatial index
        ("query_radius: empty map", || {
            let map = SemanticMap::for_database(MapConfig::default(), &chair_entry_db()).map_err(|e| e.to_string())?;
            ensure(map.query_radius(&Vec3::zeros(), 3.0).is_empty(), || "non-empty".into())
        }),
        ("query_radius: boundary distance is included", || {
            let db = chair_entry_db();
            let mut map = SemanticMap::for_database(MapConfig::default(), &db).map_err(|e| e.to_string())?;
            map.fuse(&object_point(Vec3::new(1.25, 0.0, 0.0), "chair", Vec3::z(), 0, 0.5), &db).map_err(|e| e.to_string())?;
            ensure(map.query_radius(&Vec3::zeros(), 1.25) == vec![0], || "boundary point missing".into())
        }),
        ("query_radius: 100 random points match a linear scan", || {
            let db = chair_entry_db();
            let mut r = rng(100);
            let map = random_map(&mut r, 100, 5.0, &db);
            for _ in 0..200 {
                let c = Vec3::new(r.random_range(-1.0..6.0), r.random_range(-1.0..6.0), r.random_range(-1.0..6.0));
                let rad = r.random_range(0.0..3.0);
                ensure(map.query_radius(&c, rad) == linear_scan(&map, &c, rad), || format!("mismatch at {c:?} r={rad}"))?;
            }
            Ok(())
        }),
        // fusion weights
        ("compute_weights: 67.5 degrees, same octave, p_l 0.8", || {
            let sp = superpoint(vec![Vec3::x()], vec![1]);
            let view = Vec3::new(67.5f64.to_radians().cos(), 67.5f64.to_radians().sin(), 0.0);
            let w = compute_weights(&object_point(Vec3::zeros(), "chair", view, 1, 0.8), &[&sp], &MapConfig::default());
            close(w.w_v, 0.5, "w_v")?;
            close(w.w_s, 0.0, "w_s")?;
            close(w.e_in, 0.2, "E_in")
        }),
        ("compute_weights: 30 degrees, two octaves apart", || {
            let sp = superpoint(vec![Vec3::x()], vec![1]);
            let view = Vec3::new(30f64.to_radians().cos(), 30f64.to_radians().sin(), 0.0);
            let w = compute_weights(&object_point(Vec3::zeros(), "chair", view, 3, 0.8), &[&sp], &MapConfig::default());
            close(w.w_v, 0.0, "w_v")?;
            close(w.w_s, 0.4, "w_s")
        }),
        ("compute_weights: empty neighbourhood passes p_l through", || {
            let w = compute_weights(&object_point(Vec3::zeros(), "chair", Vec3::x(), 0, 0.9), &[], &MapConfig::default());
            close(w.e_in, 0.9, "E_in")
        }),
        ("view and scale weights hit their breakpoints", || {
            let c = MapConfig::default();
            close(c.view_weight(45.0), 0.0, "w_v(45)")?;
            close(c.view_weight(90.0), 1.0, "w_v(90)")?;
            close(c.view_weight(180.0), 1.0, "w_v(180)")?;
            close(c.scale_weight(0.0), 0.0, "w_s(0)")?;
            close(c.scale_weight(1.0 / c.k_s), 1.0, "w_s(1/k_s)")?;
            close(c.scale_weight(9.0), 1.0, "w_s(9)")
        }),
        // fusion
        ("fuse: first observation creates a superpoint", || {
            let db = chair_entry_db();
            let mut map = SemanticMap::for_database(MapConfig::default(), &db).map_err(|e| e.to_string())?;
            map.fuse(&object_point(Vec3::zeros(), "chair", Vec3::x(), 0, 0.8), &db).map_err(|e| e.to_string())?;
            ensure(map.len() == 1, || format!("{} superpoints", map.len()))?;
            let sp = map.get(0).ok_or("missing")?;
            ensure(sp.scores.len() == 1, || format!("{:?}", sp.scores))?;
            close(sp.scores[&label("chair")], 0.8, "E_chair")
        }),
        ("fuse: re-observation from the opposite side adds E_in plus the reward", || {
            let db = chair_entry_db();
            let mut map = SemanticMap::for_database(MapConfig::default(), &db).map_err(|e| e.to_string())?;
            map.fuse(&object_point(Vec3::zeros(), "chair", Vec3::x(), 0, 0.8), &db).map_err(|e| e.to_string())?;
            map.fuse(&object_point(Vec3::zeros(), "chair", -Vec3::x(), 0, 0.8), &db).map_err(|e| e.to_string())?;
            ensure(map.len() == 1, || format!("{} superpoints", map.len()))?;
            close(map.get(0).ok_or("missing")?.scores[&label("chair")], 2.2, "E_chair")
        }),
        ("fuse: a ring-distance neighbour gets E_in and a new superpoint appears", || {
            let db = chair_entry_db();
            let mut map = SemanticMap::for_database(MapConfig::default(), &db).map_err(|e| e.to_string())?;
            map.fuse(&object_point(Vec3::zeros(), "chair", Vec3::x(), 0, 0.8), &db).map_err(|e| e.to_string())?;
            map.fuse(&object_point(Vec3::new(1.0, 0.0, 0.0), "chair", -Vec3::x(), 0, 0.8), &db)
                .map_err(|e| e.to_string())?;
            ensure(map.len() == 2, || format!("{} superpoints", map.len()))?;
            close(map.get(0).ok_or("missing")?.scores[&label("chair")], 0.8 + 0.4, "old E_chair")?;
            close(map.get(1).ok_or("missing")?.scores[&label("chair")], 0.4, "new E_chair")
        }),
        ("map_probability: equal maxima give 0.5", || close(sigmoid_margin(2.0, 2.0), 0.5, "p_map")),
        ("map_probability: margin of two", || close(sigmoid_margin(3.0, 1.0), 1.0 / (1.0 + (-2.0f64).exp()), "p_map")),
        ("map_probability: losing label floors at 0.5", || close(sigmoid_margin(1.0, 3.0), 0.5, "p_map")),
        // map dump
        ("map dump: empty map has no records", || {
            let text = dump(&MapSnapshot { superpoints: Vec::new() })?;
            ensure(text.lines().count() == 1, || text.clone())
        }),
        ("map dump: one superpoint is one record with three lists", || {
            let db = chair_entry_db();
            let mut map = SemanticMap::for_database(MapConfig::default(), &db).map_err(|e| e.to_string())?;
            map.fuse(&object_point(Vec3::new(0.5, 0.25, 2.0), "chair", Vec3::z(), 1, 0.7), &db).map_err(|e| e.to_string())?;
            let text = dump(&map.snapshot())?;
            let rec: serde_json::Value = serde_json::from_str(text.lines().nth(1).ok_or("no record")?).map_err(|e| e.to_string())?;
            for key in ["scores", "views", "scales"] {
                ensure(rec[key].as_array().map(Vec::len) == Some(1), || format!("{key}: {}", rec[key]))?;
            }
            ensure(text.lines().count() == 2, || text.clone())
        }),
        ("map dump: dump, load, dump is byte-identical", || {
            let map = random_map(&mut rng(5), 40, 3.0, &chair_entry_db());
            let first = dump(&map.snapshot())?;
            let loaded = read_map_dump(first.as_bytes()).map_err(|e| e.to_string())?;
            ensure(dump(&loaded)? == first, || "second dump differs".into())
        }),
        // pipeline
        ("pipeline: all modules off passes p_l through", || {
            let (frames, _) = eq9_frames();
            let (res, map) = run_session(&frames, PipelineConfig::with_modules(false, false, false), chair_entry_db())
                .map_err(|e| e.to_string())?;
            for (r, f) in res.iter().zip(&frames) {
                for (o, d) in r.outputs.iter().zip(&f.detections) {
                    ensure(o.p == d.p_l && o.bbox == d.bbox && o.label == d.label, || format!("{o:?} vs {d:?}"))?;
                }
            }
            ensure(map.superpoints.is_empty(), || "map built with OSM off".into())
        }),
        ("pipeline: a 5 m tall chair is halved by the scale filter alone", || {
            let (frames, _) = eq9_frames();
            let (res, _) = run_session(&frames, PipelineConfig::with_modules(false, true, false), chair_entry_db())
                .map_err(|e| e.to_string())?;
            let chair = &res[2].outputs[0];
            close(res[2].diagnostics[0].d_h.ok_or("no estimate")?, 5.0, "D_h")?;
            close(chair.p, 0.5 * 0.8, "p")
        }),
        ("pipeline: p = p_scale * p_map * p_l with 0.5, 0.5, 0.8", || {
            let (frames, _) = eq9_frames();
            let (res, _) = run_session(&frames, PipelineConfig::with_modules(false, true, true), chair_entry_db())
                .map_err(|e| e.to_string())?;
            let d = res[2].diagnostics[0];
            close(d.p_scale, 0.5, "p_scale")?;
            close(d.p_map, 0.5, "p_map")?;
            close(res[2].outputs[0].p, 0.2, "p")
        }),
        ("pipeline: empty session gives empty results and map", || {
            let (res, map) = run_session(Vec::<CameraFrame>::new(), PipelineConfig::default(), chair_entry_db())
                .map_err(|e| e.to_string())?;
            ensure(res.is_empty() && map.superpoints.is_empty(), || "not empty".into())
        }),
        ("pipeline: one frame with one detection", || {
            let (frames, _) = eq9_frames();
            let (res, map) = run_session(&frames[..1], PipelineConfig::default(), chair_entry_db()).map_err(|e| e.to_string())?;
            ensure(res.len() == 1 && res[0].outputs.len() == 1, || format!("{res:?}"))?;
            ensure(map.superpoints.len() <= 1, || format!("{} superpoints", map.superpoints.len()))
        }),
        ("pipeline: re-running a session serializes identically", || {
            let mut r = rng(77);
            let frames = super::random_session(&mut r, 12, &[label("chair"), label("tv"), label("couch")]);
            let a = serialize_results(&frames)?;
            ensure(a == serialize_results(&frames)?, || "results differ".into())
        }),
        // simulator
        ("simulate: noiseless single-object orbit reproduces ground truth", || {
            let s = generate_session(&one_object_scene(), &orbit(10, 0.0), &DetectorNoiseModel::noiseless(), &chair_entry_db())
                .map_err(|e| e.to_string())?;
            ensure(s.frames.len() == 10, || format!("{} frames", s.frames.len()))?;
            for f in &s.frames {
                let gt = f.ground_truth.as_ref().ok_or("no ground truth")?;
                ensure(gt.len() == 1 && f.frame.detections.len() == 1, || format!("frame {}", f.frame.frame_id))?;
                ensure(f.frame.detections[0].bbox == gt[0].bbox && f.frame.detections[0].label == gt[0].label, || {
                    format!("frame {} box differs", f.frame.frame_id)
                })?;
            }
            Ok(())
        }),
        ("simulate: fp_rate 2 over 100 frames plants about 200 false positives", || {
            let noise = DetectorNoiseModel { fp_rate: 2.0, rng_seed: 4, max_detections: 50, ..DetectorNoiseModel::noiseless() };
            let s = generate_session(&one_object_scene(), &orbit(100, 0.0), &noise, &chair_entry_db()).map_err(|e| e.to_string())?;
            let planted: usize = s
                .provenance
                .iter()
                .map(|p| p.detections.iter().filter(|d| matches!(d, Provenance::Planted { .. })).count())
                .sum();
            let sigma = 200f64.sqrt();
            ensure((planted as f64 - 200.0).abs() <= 3.0 * sigma, || format!("{planted} planted"))
        }),
        ("simulate: at 90 degrees of roll the raw stream misses more", || {
            let noise = DetectorNoiseModel {
                roll_penalty: RollPenalty { miss_at_90: 0.4, inflation_at_90: 0.0, confusion_at_90: 0.0 },
                rng_seed: 8,
                streams: DetectionStreams::Both,
                ..DetectorNoiseModel::noiseless()
            };
            let s = generate_session(&one_object_scene(), &orbit(60, 90.0), &noise, &chair_entry_db()).map_err(|e| e.to_string())?;
            let raw: usize = s.frames.iter().map(|f| f.frame.detections.len()).sum();
            let corrected: usize = s.frames.iter().map(|f| f.frame.corrected_detections.as_ref().map_or(0, Vec::len)).sum();
            ensure(raw < corrected, || format!("raw {raw}, corrected {corrected}"))
        }),
        // evaluation
        ("iou: identical boxes", || close(iou(&BBox::new(1.0, 2.0, 3.0, 4.0), &BBox::new(1.0, 2.0, 3.0, 4.0)), 1.0, "iou")),
        ("iou: disjoint boxes", || close(iou(&BBox::new(0.0, 0.0, 1.0, 1.0), &BBox::new(5.0, 5.0, 1.0, 1.0)), 0.0, "iou")),
        ("iou: unit squares overlapping by half", || {
            close(iou(&BBox::new(0.0, 0.0, 1.0, 1.0), &BBox::new(0.5, 0.0, 1.0, 1.0)), 1.0 / 3.0, "iou")
        }),
        ("match: one detection on one ground truth", || {
            let gts = gt_frame(vec![BBox::new(10.0, 10.0, 20.0, 20.0)]);
            let flags = match_detections(&[det(0.9, BBox::new(10.0, 10.0, 20.0, 20.0))], &gts, 0.5, 100);
            ensure(flags == [MatchFlag::TruePositive(0)], || format!("{flags:?}"))
        }),
        ("match: two detections on one ground truth", || {
            let gts = gt_frame(vec![BBox::new(10.0, 10.0, 20.0, 20.0)]);
            let b = BBox::new(10.0, 10.0, 20.0, 20.0);
            let flags = match_detections(&[det(0.6, b), det(0.9, b)], &gts, 0.5, 100);
            ensure(flags == [MatchFlag::FalsePositive, MatchFlag::TruePositive(0)], || format!("{flags:?}"))
        }),
        ("match: three hand-built frames agree with the exhaustive oracle", || {
            for (dets, gts, want) in hand_frames() {
                let got = match_detections(&dets, &gts, 0.5, 100);
                ensure(got == want, || format!("greedy {got:?}, expected {want:?}"))?;
                let oracle = exhaustive_match(&dets, &gts, 0.5, 100);
                ensure(got == oracle, || format!("greedy {got:?}, oracle {oracle:?}"))?;
            }
            Ok(())
        }),
        ("average_precision: all true positives covering all ground truth", || {
            close(average_precision(&[(0.9, true), (0.5, true)], 2).ok_or("none")?, 1.0, "AP")
        }),
        ("average_precision: all false positives", || {
            close(average_precision(&[(0.9, false), (0.5, false)], 2).ok_or("none")?, 0.0, "AP")
        }),
        ("average_precision: mixed five detections", || {
            let entries = [(0.9, true), (0.8, false), (0.7, true), (0.6, false), (0.5, true)];
            // Interpolated precision is 1 up to recall 0.25, 2/3 up to 0.5,
            // 0.6 up to 0.75 and 0 beyond: 26, 25, 25 and 25 sample points.
            let want = (26.0 * 1.0 + 25.0 * (2.0 / 3.0) + 25.0 * 0.6) / 101.0;
            close(average_precision(&entries, 4).ok_or("none")?, want, "AP")
        }),
        ("coco_metrics: a perfect session scores 1", || {
            let (results, gts) = perfect_eval();
            let m = coco_metrics(&results, &gts, &EvalParams::default()).map_err(|e| e.to_string())?;
            close(m.ap.ok_or("no AP")?, 1.0, "AP")?;
            close(m.ar10.ok_or("no AR")?, 1.0, "AR10")
        }),
        ("coco_metrics: no detections scores 0", || {
            let (mut results, gts) = perfect_eval();
            for r in &mut results {
                r.outputs.clear();
                r.diagnostics.clear();
            }
            let m = coco_metrics(&results, &gts, &EvalParams::default()).map_err(|e| e.to_string())?;
            close(m.ap.ok_or("no AP")?, 0.0, "AP")
        }),
        // session format
        ("session: write then read is structurally identical", || {
            let frames = super::random_session(&mut rng(3), 5, &[label("chair"), label("tv")]);
            let bytes = write_session(&frames)?;
            let back: Vec<CameraFrame> = SessionReader::new(bytes.as_slice())
                .map_err(|e| e.to_string())?
                .map(|f| f.map(|f| f.frame).map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?;
            ensure(back.len() == frames.len(), || "frame count".into())?;
            for (a, b) in back.iter().zip(&frames) {
                ensure(a.frame_id == b.frame_id && a.detections.len() == b.detections.len() && a.points.len() == b.points.len(), || {
                    format!("frame {} differs", b.frame_id)
                })?;
                ensure(a.pose.rotation.angle_to(&b.pose.rotation) < 1e-7, || "pose differs".into())?;
            }
            Ok(())
        }),
        ("session: decreasing frame id is rejected at its line", || {
            let mut frames = super::random_session(&mut rng(4), 3, &[label("chair")]);
            frames[2].frame_id = frames[0].frame_id;
            let bytes = write_session(&frames)?;
            let err = SessionReader::new(bytes.as_slice()).map_err(|e| e.to_string())?.find_map(Result::err).ok_or("accepted")?;
            ensure(matches!(err, FormatError::Invalid { line: 4, .. }), || format!("{err}"))
        }),
        ("session: truncated final record names its byte offset", || {
            let frames = super::random_session(&mut rng(6), 2, &[label("chair")]);
            let mut bytes = write_session(&frames)?;
            let last_start = bytes[..bytes.len() - 1].iter().rposition(|&b| b == b'\n').ok_or("one line")? + 1;
            bytes.truncate(last_start + 25);
            let err = SessionReader::new(bytes.as_slice()).map_err(|e| e.to_string())?.find_map(Result::err).ok_or("accepted")?;
            ensure(matches!(err, FormatError::Truncated { line: 3, offset } if offset == last_start as u64), || format!("{err}"))?;
            ensure(err.to_string().contains(&format!("byte offset {last_start}")), || format!("{err}"))
        }),
    ]
}

pub fn reference_cases() -> Vec<(&'static str, Check)> {
    vec![
        ("scale database reproduces the four measured rows", || {
            let db = ScaleDatabase::default_coco();
            for (name, row) in [
                ("chair", [0.8, 1.7, 0.3, 1.0]),
                ("dining table", [1.0, 1.5, 0.5, 2.0]),
                ("oven", [0.3, 1.4, 0.4, 1.2]),
                ("refrigerator", [0.5, 2.0, 0.5, 1.4]),
            ] {
                let e = db.get(label(name)).ok_or(format!("{name} missing"))?;
                let got = [e.min_w, e.max_w, e.min_h, e.max_h];
                ensure(got == row, || format!("{name}: {got:?} != {row:?}"))?;
            }
            let csv_row = DEFAULT_SCALE_DB.lines().any(|l| l == "chair,0.8,1.7,0.3,1.0");
            ensure(csv_row, || "chair row not verbatim in the shipped file".into())
        }),
        ("oven radii derive from its row", || {
            let e = ScaleDatabase::default_coco().get(label("oven")).cloned().ok_or("oven missing")?;
            close(e.fuse_radius(), 1.4, "fuse radius")?;
            close(e.create_radius(), 0.3, "create radius")
        }),
        ("chair 1.0 x 0.8 m is plausible", || {
            let e = est(1.0, 0.8);
            close(scale_filter_prob(Some(&e), label("chair"), &chair_entry_db()).map_err(|x| x.to_string())?, 1.0, "p_scale")
        }),
        ("chair 5 m tall is implausible", || {
            let e = est(1.0, 5.0);
            close(scale_filter_prob(Some(&e), label("chair"), &chair_entry_db()).map_err(|x| x.to_string())?, 0.5, "p_scale")
        }),
        ("map config constants", || {
            let c = MapConfig::default();
            close(c.k_s, 0.2, "k_s")?;
            close(c.s_diff_cap, 5.0, "s_diff range upper bound")?;
            close(c.view_gate_deg, 45.0, "view gate")?;
            close(c.view_cap_deg, 90.0, "view cap")?;
            close(c.k_s * c.s_diff_cap, 1.0, "k_s normalises [0, 5]")?;
            let from_file: PipelineConfig = vidar_core::io::parse_toml("[map]\n").map_err(|e| e.to_string())?;
            ensure(from_file.map == c, || "config file defaults differ".into())
        }),
    ]
}

fn est(d_w: f64, d_h: f64) -> ScaleEstimate {
    ScaleEstimate { d_w, d_h, d: 2.0, loc: Vec3::zeros(), n_points: 3 }
}

fn scale_frame(points: Vec<Vec3>, f: f64) -> CameraFrame {
    CameraFrame {
        frame_id: 0,
        timestamp: 0.0,
        intrinsics: CameraIntrinsics { fx: f, fy: f, cx: 160.0, cy: 160.0, width: 320, height: 320 },
        pose: Pose::identity(),
        gravity: Vec3::new(0.0, 1.0, 0.0),
        points,
        detections: Vec::new(),
        detection_frame: DetectionFrame::Original,
        corrected_detections: None,
    }
}

/// Three frames around an object at (0, 0, 2): a couch seen from the front,
/// the couch again from behind, then a 5 m tall "chair" from the front.
fn eq9_frames() -> (Vec<CameraFrame>, Vec3) {
    let loc = Vec3::new(0.0, 0.0, 2.0);
    let intr = CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 320.0, cy: 320.0, width: 640, height: 640 };
    let front = Pose::identity();
    let back = Pose::new(UnitQuaternion::from_euler_angles(0.0, PI, 0.0), Vec3::new(0.0, 0.0, 4.0));
    // At 2 m and f = 100, one meter spans 50 px.
    let centered = |w_m: f64, h_m: f64| BBox::new(320.0 - 25.0 * w_m, 320.0 - 25.0 * h_m, 50.0 * w_m, 50.0 * h_m);
    let frame = |id: u64, pose: Pose, name: &str, p_l: f64, bbox: BBox| CameraFrame {
        frame_id: id,
        timestamp: id as f64,
        intrinsics: intr,
        pose,
        gravity: Vec3::new(0.0, 1.0, 0.0),
        points: vec![loc; 3],
        detections: vec![Detection { label: label(name), p_l, bbox }],
        detection_frame: DetectionFrame::Original,
        corrected_detections: None,
    };
    (
        vec![
            frame(0, front, "couch", 1.0, centered(2.0, 0.8)),
            frame(1, back, "couch", 1.0, centered(2.0, 0.8)),
            frame(2, front, "chair", 0.8, centered(1.0, 5.0)),
        ],
        loc,
    )
}

fn serialize_results(frames: &[CameraFrame]) -> Result<Vec<u8>, String> {
    let cfg = PipelineConfig::default();
    let (res, _) = run_session(frames, cfg.clone(), ScaleDatabase::default_coco()).map_err(|e| e.to_string())?;
    let mut w = ResultsWriter::new(Vec::new(), &ResultsHeader::new(&cfg)).map_err(|e| e.to_string())?;
    for r in &res {
        w.write(r).map_err(|e| e.to_string())?;
    }
    w.finish().map_err(|e| e.to_string())
}

fn dump(s: &MapSnapshot) -> Result<String, String> {
    let mut out = Vec::new();
    write_map_dump(&mut out, s).map_err(|e| e.to_string())?;
    String::from_utf8(out).map_err(|e| e.to_string())
}

fn write_session(frames: &[CameraFrame]) -> Result<Vec<u8>, String> {
    let header = SessionHeader::new(frames.first().map_or(super::TEST_INTRINSICS, |f| f.intrinsics), &CategoryDict::coco());
    let mut w = SessionWriter::new(Vec::new(), header).map_err(|e| e.to_string())?;
    for f in frames {
        w.write_frame(f, None).map_err(|e| e.to_string())?;
    }
    w.finish().map_err(|e| e.to_string())
}

fn one_object_scene() -> SceneSpec {
    SceneSpec {
        name: "one".into(),
        bounds: Bounds { min: [-4.0, -4.0, 0.0], max: [4.0, 4.0, 3.0] },
        objects: vec![ObjectSpec { category: "chair".into(), center: [0.0, 0.0, 0.35], dims: [1.0, 0.7, 0.8] }],
        clutter_density: 0.3,
        floor_density: 1.0,
    }
}

fn orbit(n: usize, roll_deg: f64) -> TrajectorySpec {
    TrajectorySpec {
        n_frames: n,
        frame_interval: 1.0,
        target: None,
        path: PathSpec::Orbit { radius: 3.0, height: 1.2, start_deg: 0.0, sweep_deg: 360.0 },
        roll: RollProfile::Constant { deg: roll_deg },
        camera: vidar_core::simulator::spec::default_camera(),
    }
}

fn det(p: f64, bbox: BBox) -> ScoredDetection {
    ScoredDetection { label: label("chair"), p, bbox }
}

fn gt_frame(boxes: Vec<BBox>) -> GroundTruthFrame {
    GroundTruthFrame { frame_id: 0, boxes: boxes.into_iter().map(|b| GtBox::new(label("chair"), b)).collect() }
}

/// Frames where greedy order matters: a high-scored detection claiming the
/// better-overlapping box, a label mismatch, and a detection between two boxes.
fn hand_frames() -> Vec<(Vec<ScoredDetection>, GroundTruthFrame, Vec<MatchFlag>)> {
    use MatchFlag::*;
    let a = BBox::new(0.0, 0.0, 10.0, 10.0);
    let b = BBox::new(6.0, 0.0, 10.0, 10.0);
    vec![
        (
            // d0 is exactly a and overlaps b at IoU 0.25; d1 is exactly b.
            vec![det(0.9, a), det(0.8, b)],
            gt_frame(vec![a, b]),
            vec![TruePositive(0), TruePositive(1)],
        ),
        (
            vec![
                ScoredDetection { label: label("tv"), p: 0.95, bbox: a },
                det(0.5, BBox::new(1.0, 0.0, 10.0, 10.0)),
                det(0.4, a),
            ],
            gt_frame(vec![a]),
            vec![FalsePositive, TruePositive(0), FalsePositive],
        ),
        (
            // d0 sits between a and b with IoU 7/13 to each; the
            // lower gt index wins the tie.
            vec![det(0.7, BBox::new(3.0, 0.0, 10.0, 10.0)), det(0.6, BBox::new(5.0, 0.0, 10.0, 10.0))],
            gt_frame(vec![a, BBox::new(6.0, 0.0, 10.0, 10.0)]),
            vec![TruePositive(0), TruePositive(1)],
        ),
    ]
}

fn perfect_eval() -> (Vec<FrameResult>, Vec<GroundTruthFrame>) {
    let boxes = [BBox::new(0.0, 0.0, 20.0, 20.0), BBox::new(50.0, 50.0, 60.0, 40.0), BBox::new(100.0, 0.0, 120.0, 110.0)];
    let gts: Vec<GroundTruthFrame> = (0..3)
        .map(|i| GroundTruthFrame { frame_id: i, boxes: boxes.iter().map(|b| GtBox::new(label("chair"), *b)).collect() })
        .collect();
    let results = gts
        .iter()
        .map(|g| {
            let outputs: Vec<ScoredDetection> = g.boxes.iter().map(|b| det(0.9, b.bbox)).collect();
            let diagnostics = outputs
                .iter()
                .map(|o| vidar_core::pipeline::DetectionDiagnostics {
                    p_l: o.p,
                    p_scale: 1.0,
                    p_map: 1.0,
                    d_w: None,
                    d_h: None,
                    d: None,
                    roll: 0.0,
                })
                .collect();
            FrameResult { frame_id: g.frame_id, outputs, diagnostics }
        })
        .collect();
    (results, gts)
}
