//! Pearson and Spearman correlation between per-cell zone metrics and the
//! object distribution.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::ZoneKind;
use crate::zone_eval::GridReport;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Input(format!("correlation inputs differ in length ({} vs {})", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Input("correlation needs at least two points".into()));
    }
    Ok(())
}

/// Product-moment correlation. `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationPoint {
    pub iou: f64,
    pub pcc: Option<f64>,
    pub scc: Option<f64>,
    /// Cells with a defined metric.
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCurve {
    pub points: Vec<CorrelationPoint>,
}

/// Correlates per-cell mZP with per-cell object counts at each IoU
/// threshold. Cells with undefined mZP are dropped pairwise.
pub fn zone_metric_correlation(grid: &GridReport, counts: &[u64], thresholds: &[f64]) -> Result<CorrelationCurve> {
    if thresholds.is_empty() {
        return Err(Error::Input("no IoU thresholds given".into()));
    }
    if counts.len() != grid.cells.len() {
        return Err(Error::Input(format!("distribution has {} cells, grid report {}", counts.len(), grid.cells.len())));
    }
    for (k, cell) in grid.cells.iter().enumerate() {
        let expect_row = k as u32 / grid.cols;
        let expect_col = k as u32 % grid.cols;
        match cell.zone.kind {
            ZoneKind::GridCell { row, col, rows, cols }
                if rows == grid.rows && cols == grid.cols && row == expect_row && col == expect_col => {}
            _ => return Err(Error::Input("grid report cells are not a row-major grid".into())),
        }
    }
    let mut points = Vec::with_capacity(thresholds.len());
    for &iou in thresholds {
        let mut metric = Vec::new();
        let mut count = Vec::new();
        for (cell, &c) in grid.cells.iter().zip(counts) {
            if let Some(v) = cell.mzp_at(iou) {
                metric.push(v);
                count.push(c as f64);
            }
        }
        let (pcc, scc) =
            if metric.len() < 2 { (None, None) } else { (pearson(&metric, &count)?, spearman(&metric, &count)?) };
        points.push(CorrelationPoint { iou, pcc, scc, n_points: metric.len() });
    }
    Ok(CorrelationCurve { points })
}
