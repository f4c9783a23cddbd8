//! Executes one resolved run and writes its report files.

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use zonal::assign::{assign, assignment_zone_stats, load_scenes, ZoneSamplingStats};
use zonal::dataset::object_distribution;
use zonal::report::{
    correlation_csv, correlation_json, count_matrix, grid_json, heatmap_csv, sampling_csv, sampling_json,
    summary_table, sweep_json, zone_report_json, zones_csv, SCHEMA_VERSION,
};
use zonal::stats::zone_metric_correlation;
use zonal::zone_eval::{grid_evaluation, range_sweep, zone_evaluation, GridReport};
use zonal::{
    annular_zones, grid_zones, load_detections, load_ground_truth, DetectionDataset, DetectionSet, Error, EvalConfig,
    Result,
};

use crate::config::{Mode, RunConfig};

/// Report files and the text printed to stdout.
pub struct Output {
    pub files: Vec<(String, String)>,
    pub summary: String,
}

fn check_readable(path: &Path) -> Result<()> {
    File::open(path).map(drop).map_err(|source| Error::Io { path: path.to_owned(), source })
}

fn load(gt: &Path, det: &Path) -> Result<(DetectionDataset, DetectionSet, Value)> {
    let (ds, gt_stats) = load_ground_truth(gt)?;
    let (dets, det_stats) = load_detections(det, &ds)?;
    let inputs =
        json!({ "gt": gt_stats, "det": det_stats, "images": ds.images().len(), "categories": ds.categories().len() });
    Ok((ds, dets, inputs))
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.1}", v * 100.0)).unwrap_or_else(|| "-".into())
}

fn grid_summary(g: &GridReport) -> String {
    let mut out = String::from("ZP per cell (%)\n");
    for row in g.matrix(|m| m.zp) {
        let cells: Vec<String> = row.iter().map(|v| format!("{:>6}", pct(*v))).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    out
}

fn grid_files(g: &GridReport, counts: &[u64], files: &mut Vec<(String, String)>) {
    files.push(("grid.csv".into(), zones_csv(&g.cells)));
    files.push(("heatmap_counts.csv".into(), heatmap_csv(&count_matrix(counts, g.cols as usize))));
    files.push(("heatmap_zp.csv".into(), heatmap_csv(&g.matrix(|m| m.zp))));
}

fn sampling_summary(stats: &[ZoneSamplingStats]) -> String {
    let mut out = format!("{:>14} {:>8} {:>10} {:>12}\n", "zone", "objects", "positives", "pos/object");
    for s in stats {
        let mean = s.mean_positives_per_gt.map(|m| format!("{m:.2}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "{:>14} {:>8} {:>10} {:>12}", s.zone.label(), s.n_gt, s.positives, mean);
    }
    out
}

/// Runs `config`, returning everything to be written. Reads inputs but
/// writes nothing.
pub fn execute(config: &RunConfig) -> Result<Output> {
    for path in [&config.gt, &config.det, &config.scene].into_iter().flatten() {
        check_readable(path)?;
    }
    let want_csv = config.format.wants_csv();
    let mut files = Vec::new();

    let (inputs, result, summary) = if config.mode == Mode::Assign {
        let scene_path = config.scene.as_ref().expect("resolved");
        let assigner = config.assigner.expect("resolved");
        let zones = annular_zones(config.zones.expect("resolved"))?;
        let scenes = load_scenes(scene_path)?;
        let mut totals: Vec<ZoneSamplingStats> = Vec::new();
        let mut per_scene = Vec::new();
        for scene in &scenes {
            let grid = scene.grid()?;
            let gts = scene.boxes()?;
            let r = assign(&grid, &gts, &assigner)?;
            let stats = assignment_zone_stats(&r, &gts, &grid, &zones)?;
            if totals.is_empty() {
                totals = stats.clone();
            } else {
                for (t, s) in totals.iter_mut().zip(&stats) {
                    t.n_gt += s.n_gt;
                    t.positives += s.positives;
                }
            }
            per_scene.push(json!({
                "anchors": grid.len(),
                "positives_per_gt": r.positives_per_gt,
                "thresholds": r.thresholds,
                "total_positives": r.total_positives(),
                "zones": sampling_json(&stats),
            }));
        }
        for t in &mut totals {
            t.mean_positives_per_gt = (t.n_gt > 0).then(|| t.positives as f64 / t.n_gt as f64);
        }
        if want_csv {
            files.push(("sampling.csv".into(), sampling_csv(&totals)));
        }
        (
            json!({ "scenes": scenes.len() }),
            json!({ "scenes": per_scene, "zones": sampling_json(&totals) }),
            sampling_summary(&totals),
        )
    } else {
        let (ds, dets, inputs) = load(config.gt.as_ref().expect("resolved"), config.det.as_ref().expect("resolved"))?;
        let eval = EvalConfig {
            iou_thresholds: config.iou_thresholds.clone().expect("resolved"),
            max_dets: config.max_dets.expect("resolved"),
        };
        match config.mode {
            Mode::Eval => {
                let report = zone_evaluation(&ds, &dets, config.zones.expect("resolved"), &eval)?;
                if want_csv {
                    let mut rows = report.zones.clone();
                    rows.push(report.traditional.clone());
                    files.push(("zones.csv".into(), zones_csv(&rows)));
                }
                (inputs, zone_report_json(&report), summary_table(&report))
            }
            Mode::Sweep => {
                let bands = range_sweep(&ds, &dets, config.sweep.as_ref().expect("resolved"), &eval)?;
                if want_csv {
                    files.push(("sweep.csv".into(), zones_csv(&bands)));
                }
                let mut s = format!("{:>14} {:>6} {:>6} {:>6}\n", "band", "ZP", "ZP50", "ZP75");
                for b in &bands {
                    let _ =
                        writeln!(s, "{:>14} {:>6} {:>6} {:>6}", b.zone.label(), pct(b.zp), pct(b.zp50), pct(b.zp75));
                }
                (inputs, sweep_json(&bands), s)
            }
            Mode::Grid | Mode::Corr => {
                let shape = config.grid.expect("resolved");
                let g = grid_evaluation(&ds, &dets, shape.rows, shape.cols, &eval)?;
                let counts = object_distribution(&ds, &grid_zones(shape.rows, shape.cols)?)?;
                if want_csv {
                    grid_files(&g, &counts, &mut files);
                }
                let mut result = grid_json(&g);
                result["distribution"] = json!(count_matrix(&counts, shape.cols as usize));
                let mut summary = grid_summary(&g);
                if config.mode == Mode::Corr {
                    let curve = zone_metric_correlation(&g, &counts, &eval.iou_thresholds)?;
                    if want_csv {
                        files.push(("correlation.csv".into(), correlation_csv(&curve)));
                    }
                    result["correlation"] = correlation_json(&curve)["correlation"].clone();
                    summary = format!("{:>6} {:>8} {:>8} {:>6}\n", "IoU", "PCC", "SCC", "cells");
                    for p in &curve.points {
                        let f = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
                        let _ = writeln!(summary, "{:>6.2} {:>8} {:>8} {:>6}", p.iou, f(p.pcc), f(p.scc), p.n_points);
                    }
                }
                (inputs, result, summary)
            }
            Mode::Assign => unreachable!(),
        }
    };

    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": { "name": "zonal", "version": env!("CARGO_PKG_VERSION") },
        "config": config,
        "inputs": inputs,
        "result": result,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    files.insert(0, ("report.json".into(), text));
    Ok(Output { files, summary })
}

/// Writes every output file under `dir`, creating it if needed.
pub fn write(dir: &Path, output: &Output) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_owned(), source })?;
    let mut written = Vec::new();
    for (name, body) in &output.files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| Error::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
