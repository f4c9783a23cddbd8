//! Multi-zone evaluation: per-zone precision, the area-weighted
//! spatial-equilibrium score, zone variance, range sweeps and grid runs.

use rayon::prelude::*;
use serde::Serialize;

use crate::ap::{EvalConfig, ZoneEvaluator};
use crate::dataset::{DetectionDataset, DetectionSet};
use crate::error::{Error, Result};
use crate::geometry::{annular_zones, grid_zones, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdMetric {
    pub iou: f64,
    pub value: Option<f64>,
}

/// Metrics of one zone. Values are fractions; `None` means no ground truth of
/// any category fell in the zone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneMetrics {
    pub zone: Zone,
    pub zp: Option<f64>,
    pub zp50: Option<f64>,
    pub zp75: Option<f64>,
    /// Mean AP over categories at each IoU threshold.
    pub mzp: Vec<ThresholdMetric>,
    pub n_gt: usize,
    pub n_det: usize,
}

impl ZoneMetrics {
    pub fn mzp_at(&self, iou: f64) -> Option<f64> {
        self.mzp.iter().find(|m| (m.iou - iou).abs() < 1e-9).and_then(|m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneReport {
    pub n: u32,
    pub zones: Vec<ZoneMetrics>,
    pub sp: Option<f64>,
    pub sp75: Option<f64>,
    pub variance: Option<f64>,
    pub variance75: Option<f64>,
    pub traditional: ZoneMetrics,
}

fn check_lengths(values: usize, areas: usize) -> Result<()> {
    if values != areas {
        return Err(Error::Input(format!("{values} zone values but {areas} zone areas")));
    }
    if values == 0 {
        return Err(Error::Input("no zones".into()));
    }
    Ok(())
}

fn check_area_sum(areas: &[f64]) -> Result<()> {
    let total: f64 = areas.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("zone areas sum to {total}, not 1")));
    }
    Ok(())
}

/// `Σ area_i · value_i` over a full partition.
pub fn spatial_equilibrium_precision(values: &[f64], areas: &[f64]) -> Result<f64> {
    check_lengths(values.len(), areas.len())?;
    check_area_sum(areas)?;
    Ok(values.iter().zip(areas).map(|(v, a)| v * a).sum())
}

/// Like [`spatial_equilibrium_precision`], but zones without a value give up
/// their area to the defined zones in proportion to those zones' areas.
/// `None` when no zone is defined.
pub fn spatial_equilibrium_precision_partial(values: &[Option<f64>], areas: &[f64]) -> Result<Option<f64>> {
    check_lengths(values.len(), areas.len())?;
    check_area_sum(areas)?;
    if values.iter().all(Option::is_some) {
        return Ok(Some(values.iter().zip(areas).map(|(v, a)| v.unwrap() * a).sum()));
    }
    let defined_area: f64 = values.iter().zip(areas).filter(|(v, _)| v.is_some()).map(|(_, a)| a).sum();
    if defined_area == 0.0 {
        return Ok(None);
    }
    Ok(Some(values.iter().zip(areas).filter_map(|(v, a)| v.map(|v| v * a / defined_area)).sum()))
}

/// Population variance of the zone values.
pub fn zone_variance(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input("variance of an empty zone list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

fn evaluate_all(evaluator: &ZoneEvaluator<'_>, zones: &[Zone]) -> Result<Vec<ZoneMetrics>> {
    zones.par_iter().map(|z| evaluator.evaluate(z)).collect()
}

fn aggregate(zones: &[ZoneMetrics], pick: impl Fn(&ZoneMetrics) -> Option<f64>) -> Result<(Option<f64>, Option<f64>)> {
    let values: Vec<Option<f64>> = zones.iter().map(&pick).collect();
    let areas: Vec<f64> = zones.iter().map(|z| z.zone.normalized_area).collect();
    let sp = spatial_equilibrium_precision_partial(&values, &areas)?;
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    let variance = if defined.is_empty() { None } else { Some(zone_variance(&defined)?) };
    Ok((sp, variance))
}

/// Evaluates the `n` annular zones and the full image.
pub fn zone_evaluation(ds: &DetectionDataset, dets: &DetectionSet, n: u32, config: &EvalConfig) -> Result<ZoneReport> {
    let zones = annular_zones(n)?;
    let evaluator = ZoneEvaluator::new(ds, dets, config.clone())?;
    let metrics = evaluate_all(&evaluator, &zones)?;
    let traditional = evaluator.evaluate(&Zone::full())?;
    let (sp, variance) = aggregate(&metrics, |m| m.zp)?;
    let (sp75, variance75) = aggregate(&metrics, |m| m.zp75)?;
    Ok(ZoneReport { n, zones: metrics, sp, sp75, variance, variance75, traditional })
}

/// Evaluates one band `(r_i, r_j)` per pair, in the given order.
pub fn range_sweep(
    ds: &DetectionDataset,
    dets: &DetectionSet,
    sweep: &[(f64, f64)],
    config: &EvalConfig,
) -> Result<Vec<ZoneMetrics>> {
    let zones: Vec<Zone> = sweep.iter().map(|&(ri, rj)| Zone::range_band(ri, rj)).collect::<Result<_>>()?;
    let evaluator = ZoneEvaluator::new(ds, dets, config.clone())?;
    evaluate_all(&evaluator, &zones)
}

/// `(0, 0.05j)` for `j = 1..=10`.
pub fn hollowing_sweep() -> Vec<(f64, f64)> {
    (1..=10).map(|j| (0.0, 0.05 * j as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub rows: u32,
    pub cols: u32,
    /// Row-major.
    pub cells: Vec<ZoneMetrics>,
}

impl GridReport {
    /// Row-major matrix of one metric.
    pub fn matrix(&self, pick: impl Fn(&ZoneMetrics) -> Option<f64>) -> Vec<Vec<Option<f64>>> {
        self.cells.chunks(self.cols as usize).map(|row| row.iter().map(&pick).collect()).collect()
    }
}

pub fn grid_evaluation(
    ds: &DetectionDataset,
    dets: &DetectionSet,
    rows: u32,
    cols: u32,
    config: &EvalConfig,
) -> Result<GridReport> {
    let zones = grid_zones(rows, cols)?;
    let evaluator = ZoneEvaluator::new(ds, dets, config.clone())?;
    Ok(GridReport { rows, cols, cells: evaluate_all(&evaluator, &zones)? })
}
