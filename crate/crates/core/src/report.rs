//! JSON and CSV renderings of evaluation results.
//!
//! Metrics are written as fractions at full precision; undefined metrics are
//! `null` in JSON and empty fields in CSV. The human-readable summary prints
//! percentages with one decimal.

use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::assign::ZoneSamplingStats;
use crate::geometry::ZoneKind;
use crate::stats::CorrelationCurve;
use crate::zone_eval::{GridReport, ZoneMetrics, ZoneReport};

pub const SCHEMA_VERSION: u32 = 1;

fn range_of(kind: &ZoneKind) -> Value {
    match kind.insets() {
        Some((ri, rj)) => json!([ri, rj]),
        None => Value::Null,
    }
}

pub fn zone_metrics_json(m: &ZoneMetrics) -> Value {
    json!({
        "label": m.zone.label(),
        "kind": m.zone.kind,
        "range": range_of(&m.zone.kind),
        "area": m.zone.normalized_area,
        "zp": m.zp,
        "zp50": m.zp50,
        "zp75": m.zp75,
        "mzp": m.mzp,
        "n_gt": m.n_gt,
        "n_det": m.n_det,
    })
}

pub fn zone_report_json(r: &ZoneReport) -> Value {
    json!({
        "n": r.n,
        "sp": r.sp,
        "sp75": r.sp75,
        "variance": r.variance,
        "variance75": r.variance75,
        "traditional": zone_metrics_json(&r.traditional),
        "zones": r.zones.iter().map(zone_metrics_json).collect::<Vec<_>>(),
    })
}

pub fn sweep_json(zones: &[ZoneMetrics]) -> Value {
    json!({ "zones": zones.iter().map(zone_metrics_json).collect::<Vec<_>>() })
}

pub fn grid_json(g: &GridReport) -> Value {
    json!({
        "rows": g.rows,
        "cols": g.cols,
        "zones": g.cells.iter().map(zone_metrics_json).collect::<Vec<_>>(),
    })
}

pub fn correlation_json(c: &CorrelationCurve) -> Value {
    json!({ "correlation": c.points })
}

pub fn sampling_json(stats: &[ZoneSamplingStats]) -> Value {
    Value::Array(
        stats
            .iter()
            .map(|s| {
                json!({
                    "label": s.zone.label(),
                    "area": s.zone.normalized_area,
                    "n_gt": s.n_gt,
                    "positives": s.positives,
                    "mean_positives_per_gt": s.mean_positives_per_gt,
                })
            })
            .collect(),
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// One row per zone.
pub fn zones_csv(zones: &[ZoneMetrics]) -> String {
    let ious: Vec<f64> = zones.first().map(|z| z.mzp.iter().map(|m| m.iou).collect()).unwrap_or_default();
    let mut header: Vec<String> =
        ["label", "r_i", "r_j", "area", "zp", "zp50", "zp75", "n_gt", "n_det"].iter().map(|s| s.to_string()).collect();
    header.extend(ious.iter().map(|t| format!("mzp@{t:.2}")));
    let rows = zones
        .iter()
        .map(|z| {
            let (ri, rj) = z.zone.kind.insets().map(|(a, b)| (a.to_string(), b.to_string())).unwrap_or_default();
            let mut row = vec![
                z.zone.label(),
                ri,
                rj,
                z.zone.normalized_area.to_string(),
                opt(z.zp),
                opt(z.zp50),
                opt(z.zp75),
                z.n_gt.to_string(),
                z.n_det.to_string(),
            ];
            row.extend(z.mzp.iter().map(|m| opt(m.value)));
            row
        })
        .collect();
    write_csv(header, rows)
}

pub fn correlation_csv(c: &CorrelationCurve) -> String {
    let header = ["iou", "pcc", "scc", "n_points"].iter().map(|s| s.to_string()).collect();
    let rows =
        c.points.iter().map(|p| vec![p.iou.to_string(), opt(p.pcc), opt(p.scc), p.n_points.to_string()]).collect();
    write_csv(header, rows)
}

pub fn sampling_csv(stats: &[ZoneSamplingStats]) -> String {
    let header =
        ["label", "area", "n_gt", "positives", "mean_positives_per_gt"].iter().map(|s| s.to_string()).collect();
    let rows = stats
        .iter()
        .map(|s| {
            vec![
                s.zone.label(),
                s.zone.normalized_area.to_string(),
                s.n_gt.to_string(),
                s.positives.to_string(),
                opt(s.mean_positives_per_gt),
            ]
        })
        .collect();
    write_csv(header, rows)
}

/// Headerless row-major numeric matrix for external plotting.
pub fn heatmap_csv<T: ToString>(matrix: &[Vec<Option<T>>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let cells: Vec<String> = row.iter().map(|v| v.as_ref().map(ToString::to_string).unwrap_or_default()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Reshapes a row-major count vector into a `rows x cols` matrix.
pub fn count_matrix(counts: &[u64], cols: usize) -> Vec<Vec<Option<u64>>> {
    counts.chunks(cols.max(1)).map(|r| r.iter().map(|&c| Some(c)).collect()).collect()
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.1}", v * 100.0)).unwrap_or_else(|| "-".into())
}

/// Table in the layout `SP | ZP^{0,n} | Variance | ZP^{0,1} ... ZP^{n-1,n}`,
/// one row for ZP and one for ZP75.
pub fn summary_table(r: &ZoneReport) -> String {
    let mut out = String::new();
    let mut header = vec!["metric".to_string(), "SP".into(), format!("ZP^{{0,{}}}", r.n), "Variance".into()];
    header.extend(r.zones.iter().map(|z| format!("ZP{}", &z.zone.label()[1..])));
    let var = |v: Option<f64>| v.map(|v| format!("{:.1}", v * 1e4)).unwrap_or_else(|| "-".into());
    let mut row = vec!["ZP".to_string(), pct(r.sp), pct(r.traditional.zp), var(r.variance)];
    row.extend(r.zones.iter().map(|z| pct(z.zp)));
    let mut row75 = vec!["ZP75".to_string(), pct(r.sp75), pct(r.traditional.zp75), var(r.variance75)];
    row75.extend(r.zones.iter().map(|z| pct(z.zp75)));
    for line in [header, row, row75] {
        let cells: Vec<String> = line.iter().map(|c| format!("{c:>10}")).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    out
}
