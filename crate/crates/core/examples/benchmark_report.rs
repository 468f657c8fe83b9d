//! Prints the canonical benchmark ablation and per-source score statistics.

use std::collections::BTreeMap;

use vidar_core::ablation::{run_ablation, AblationMatrix};
use vidar_core::evalkit::{format_table, EvalParams};
use vidar_core::io::session::SessionFrame;
use vidar_core::pipeline::{run_session, PipelineConfig};
use vidar_core::simulator::presets::generate_benchmark;
use vidar_core::simulator::Provenance;
use vidar_core::{CategoryDict, ScaleDatabase};

fn main() {
    let db = ScaleDatabase::default_coco();
    let dict = CategoryDict::coco();
    let t0 = std::time::Instant::now();
    let sessions = generate_benchmark(&db).expect("benchmark");
    let gen_time = t0.elapsed();
    let frames: Vec<&[SessionFrame]> = sessions.iter().map(|s| s.frames.as_slice()).collect();
    let rows = run_ablation(&frames, &AblationMatrix::default(), &db, &EvalParams::default()).expect("ablation");
    println!("generated in {gen_time:?}, total {:?}", t0.elapsed());
    print!("{}", format_table(&rows));
    for r in &rows {
        println!("{:<12} ap={:.6} ar10={:.6}", r.label, r.metrics.ap.unwrap_or(f64::NAN), r.metrics.ar10.unwrap_or(f64::NAN));
    }

    // SF pass rate of true detections per category; planted-FP kill rate; p_map by source.
    let mut pass: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let (mut fp_total, mut fp_killed, mut fp_verified) = (0, 0, 0);
    let mut pmap: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut gt_count = 0;
    let mut extents: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in &sessions {
        gt_count += s.frames.iter().map(|f| f.ground_truth.as_ref().unwrap().len()).sum::<usize>();
        let (res, _) = run_session(s.camera_frames(), PipelineConfig::default(), db.clone()).unwrap();
        for (r, prov) in res.iter().zip(&s.provenance) {
            for (d, p) in r.diagnostics.iter().zip(prov.corrected.as_ref().unwrap()) {
                match p {
                    Provenance::Object { true_label, confused, .. } => {
                        let key = if *confused { "confused" } else { "true" };
                        let e = pmap.entry(key).or_default();
                        e.0 += d.p_map;
                        e.1 += 1;
                        if !confused {
                            if let (Some(w), Some(h)) = (d.d_w, d.d_h) {
                                let e = extents.entry(dict.name(*true_label).unwrap().to_string()).or_insert_with(Vec::new);
                                e.push((w, h));
                            }
                            let e = pass.entry(dict.name(*true_label).unwrap().to_string()).or_default();
                            e.1 += 1;
                            if d.p_scale == 1.0 {
                                e.0 += 1;
                            }
                        }
                    }
                    Provenance::Planted { verified } => {
                        fp_total += 1;
                        fp_verified += *verified as usize;
                        fp_killed += (d.p_scale == 0.5) as usize;
                        let e = pmap.entry("planted").or_default();
                        e.0 += d.p_map;
                        e.1 += 1;
                    }
                }
            }
        }
    }
    println!("ground-truth boxes: {gt_count}");
    for (k, (ok, n)) in &pass {
        println!("SF pass {k:<14} {ok}/{n} = {:.3}", *ok as f64 / *n as f64);
    }
    for (k, v) in &mut extents {
        let q = |xs: &mut Vec<f64>, f: f64| {
            xs.sort_by(f64::total_cmp);
            xs[((xs.len() - 1) as f64 * f) as usize]
        };
        let mut ws: Vec<f64> = v.iter().map(|e| e.0).collect();
        let mut hs: Vec<f64> = v.iter().map(|e| e.1).collect();
        println!(
            "extent {k:<14} D_w p5/50/95 {:.2}/{:.2}/{:.2}  D_h {:.2}/{:.2}/{:.2}",
            q(&mut ws, 0.05), q(&mut ws, 0.5), q(&mut ws, 0.95), q(&mut hs, 0.05), q(&mut hs, 0.5), q(&mut hs, 0.95)
        );
    }
    println!("planted FPs: {fp_total}, verified {fp_verified}, p_scale=0.5: {fp_killed} ({:.3})", fp_killed as f64 / fp_total as f64);
    for (k, (sum, n)) in &pmap {
        println!("mean p_map {k:<9} {:.3} over {n}", sum / *n as f64);
    }
}
