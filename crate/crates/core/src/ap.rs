//! Greedy detection matching and 101-point interpolated Average Precision,
//! restricted to the ground truths and detections whose centres fall in a zone.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Detection, DetectionDataset, DetectionSet, GtObject};
use crate::error::{Error, Result};
use crate::geometry::{intersection_over_first, iou, Zone};
use crate::zone_eval::{ThresholdMetric, ZoneMetrics};

pub const RECALL_POINTS: usize = 101;

/// `{0.00, 0.01, ..., 1.00}`, generated as `i * 0.01` with the last point
/// pinned to 1 (numpy `linspace` values).
pub fn recall_grid() -> Vec<f64> {
    linspace(0.0, 1.0, RECALL_POINTS)
}

/// `{0.50, 0.55, ..., 0.95}`.
pub fn coco_iou_thresholds() -> Vec<f64> {
    linspace(0.5, 0.95, 10)
}

/// `num` evenly spaced values from `start` to `stop`, both included.
pub fn linspace(start: f64, stop: f64, num: usize) -> Vec<f64> {
    if num == 1 {
        return vec![start];
    }
    let step = (stop - start) / (num - 1) as f64;
    let mut v: Vec<f64> = (0..num).map(|i| i as f64 * step + start).collect();
    v[num - 1] = stop;
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchRecord {
    pub det_index: usize,
    pub score: f64,
    pub matched: bool,
    pub matched_gt: Option<u64>,
    /// Matched a crowd region; neither a true nor a false positive.
    pub ignored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub ap: f64,
}

fn ensure_sorted(scores: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::INFINITY;
    for s in scores {
        if s > prev {
            return Err(Error::Contract("detections must be sorted by descending score".into()));
        }
        prev = s;
    }
    Ok(())
}

/// Overlap table for one (image, category) pool: `table[d][g]` is the IoU of
/// detection `d` with ground truth `g`, or intersection over the detection
/// area when `g` is a crowd region.
fn overlaps(dets: &[Detection], gts: &[GtObject]) -> Vec<Vec<f64>> {
    dets.iter()
        .map(|d| {
            gts.iter()
                .map(|g| if g.is_crowd { intersection_over_first(&d.bbox, &g.bbox) } else { iou(&d.bbox, &g.bbox) })
                .collect()
        })
        .collect()
}

fn greedy_match(dets: &[Detection], gts: &[GtObject], table: &[Vec<f64>], iou_thr: f64) -> Vec<MatchRecord> {
    let thr = iou_thr.min(1.0 - 1e-10);
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .enumerate()
        .map(|(d, det)| {
            let row = &table[d];
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if gt.is_crowd || taken[g] || row[g] < thr {
                    continue;
                }
                if best.is_none_or(|(_, v)| row[g] > v) {
                    best = Some((g, row[g]));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
                return MatchRecord {
                    det_index: d,
                    score: det.score,
                    matched: true,
                    matched_gt: Some(gts[g].id),
                    ignored: false,
                };
            }
            let mut crowd: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if gt.is_crowd && row[g] >= thr && crowd.is_none_or(|(_, v)| row[g] > v) {
                    crowd = Some((g, row[g]));
                }
            }
            MatchRecord {
                det_index: d,
                score: det.score,
                matched: false,
                matched_gt: crowd.map(|(g, _)| gts[g].id),
                ignored: crowd.is_some(),
            }
        })
        .collect()
}

/// COCO-style greedy matching of one image/category pool at one IoU threshold.
///
/// Each detection, in score order, takes the unmatched non-crowd ground truth
/// with the highest IoU at or above `iou_thr` (ties go to the earlier ground
/// truth). Failing that it may fall on a crowd region and is ignored;
/// otherwise it is a false positive.
pub fn match_detections(dets: &[Detection], gts: &[GtObject], iou_thr: f64) -> Result<Vec<MatchRecord>> {
    ensure_sorted(dets.iter().map(|d| d.score))?;
    Ok(greedy_match(dets, gts, &overlaps(dets, gts), iou_thr))
}

/// Interpolated precision-recall curve from score-sorted match records pooled
/// over all images of one category. `None` when there are no positives.
pub fn average_precision(matches: &[MatchRecord], n_gt: usize) -> Result<Option<PrCurve>> {
    ensure_sorted(matches.iter().map(|m| m.score))?;
    if n_gt == 0 {
        return Ok(None);
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut rc = Vec::with_capacity(matches.len());
    let mut pr = Vec::with_capacity(matches.len());
    for m in matches.iter().filter(|m| !m.ignored) {
        if m.matched {
            tp += 1;
        } else {
            fp += 1;
        }
        rc.push(tp as f64 / n_gt as f64);
        pr.push(tp as f64 / (tp + fp) as f64);
    }
    for k in (1..pr.len()).rev() {
        if pr[k] > pr[k - 1] {
            pr[k - 1] = pr[k];
        }
    }
    let recall = recall_grid();
    let precision: Vec<f64> = recall
        .iter()
        .map(|&r| {
            let idx = rc.partition_point(|&v| v < r);
            pr.get(idx).copied().unwrap_or(0.0)
        })
        .collect();
    let ap = precision.iter().sum::<f64>() / precision.len() as f64;
    Ok(Some(PrCurve { recall, precision, ap }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// Detections kept per image and category after zone filtering.
    pub max_dets: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_thresholds: coco_iou_thresholds(), max_dets: 100 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Input("IoU threshold set is empty".into()));
        }
        if let Some(t) = self.iou_thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Input(format!("IoU threshold {t} outside (0, 1)")));
        }
        if self.max_dets == 0 {
            return Err(Error::Input("max_dets must be at least 1".into()));
        }
        Ok(())
    }

    fn threshold_index(&self, value: f64) -> Option<usize> {
        self.iou_thresholds.iter().position(|t| (t - value).abs() < 1e-9)
    }
}

/// Ground truths and detections indexed by (image, category) so that many
/// zones can be evaluated against the same inputs.
pub struct ZoneEvaluator<'a> {
    ds: &'a DetectionDataset,
    dets: &'a DetectionSet,
    config: EvalConfig,
    gts: HashMap<(u64, u64), Vec<GtObject>>,
}

struct CategoryResult {
    /// AP per IoU threshold; `None` when the zone holds no ground truth of
    /// this category.
    ap: Option<Vec<f64>>,
}

impl<'a> ZoneEvaluator<'a> {
    pub fn new(ds: &'a DetectionDataset, dets: &'a DetectionSet, config: EvalConfig) -> Result<Self> {
        config.validate()?;
        let mut gts: HashMap<(u64, u64), Vec<GtObject>> = HashMap::new();
        for a in ds.annotations() {
            gts.entry((a.image_id, a.category_id)).or_default().push(*a);
        }
        Ok(Self { ds, dets, config, gts })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    fn evaluate_category(&self, zone: &Zone, category: u64, n_det: &mut usize) -> Result<CategoryResult> {
        let thresholds = &self.config.iou_thresholds;
        // (score, image id, rank within image, record) per threshold
        let mut pooled: Vec<Vec<(f64, u64, usize, MatchRecord)>> = vec![Vec::new(); thresholds.len()];
        let mut n_gt = 0usize;
        for img in self.ds.images() {
            let (w, h) = (img.width, img.height);
            let gts: Vec<GtObject> = self
                .gts
                .get(&(img.id, category))
                .map(|all| all.iter().filter(|g| zone.contains(g.bbox.center(), w, h)).copied().collect())
                .unwrap_or_default();
            let dets: Vec<Detection> = self
                .dets
                .group(img.id, category)
                .iter()
                .filter(|d| zone.contains(d.bbox.center().clamped(w, h), w, h))
                .take(self.config.max_dets)
                .copied()
                .collect();
            n_gt += gts.iter().filter(|g| !g.is_crowd).count();
            *n_det += dets.len();
            if dets.is_empty() {
                continue;
            }
            let table = overlaps(&dets, &gts);
            for (t, &thr) in thresholds.iter().enumerate() {
                for (rank, rec) in greedy_match(&dets, &gts, &table, thr).into_iter().enumerate() {
                    pooled[t].push((rec.score, img.id, rank, rec));
                }
            }
        }
        if n_gt == 0 {
            return Ok(CategoryResult { ap: None });
        }
        let mut aps = Vec::with_capacity(thresholds.len());
        for mut recs in pooled {
            recs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let records: Vec<MatchRecord> = recs.into_iter().map(|r| r.3).collect();
            let curve = average_precision(&records, n_gt)?.expect("positives present");
            aps.push(curve.ap);
        }
        Ok(CategoryResult { ap: Some(aps) })
    }

    /// Metrics for one zone, averaged over categories that have at least one
    /// ground truth in the zone.
    pub fn evaluate(&self, zone: &Zone) -> Result<ZoneMetrics> {
        let results: Vec<(CategoryResult, usize)> = self
            .ds
            .categories()
            .par_iter()
            .map(|c| {
                let mut n_det = 0;
                self.evaluate_category(zone, c.id, &mut n_det).map(|r| (r, n_det))
            })
            .collect::<Result<_>>()?;

        let thresholds = &self.config.iou_thresholds;
        let defined: Vec<&Vec<f64>> = results.iter().filter_map(|(r, _)| r.ap.as_ref()).collect();
        let mzp: Vec<ThresholdMetric> = thresholds
            .iter()
            .enumerate()
            .map(|(t, &iou)| ThresholdMetric {
                iou,
                value: if defined.is_empty() {
                    None
                } else {
                    Some(defined.iter().map(|aps| aps[t]).sum::<f64>() / defined.len() as f64)
                },
            })
            .collect();
        let zp = if defined.is_empty() {
            None
        } else {
            Some(mzp.iter().filter_map(|m| m.value).sum::<f64>() / mzp.len() as f64)
        };
        let at = |v: f64| self.config.threshold_index(v).and_then(|t| mzp[t].value);

        let n_gt = self
            .ds
            .annotations()
            .iter()
            .filter(|a| {
                let img = self.ds.image(a.image_id).expect("validated reference");
                !a.is_crowd && zone.contains(a.bbox.center(), img.width, img.height)
            })
            .count();
        Ok(ZoneMetrics {
            zone: *zone,
            zp,
            zp50: at(0.5),
            zp75: at(0.75),
            mzp,
            n_gt,
            n_det: results.iter().map(|(_, n)| n).sum(),
        })
    }
}

/// One-shot evaluation of a single zone.
pub fn evaluate_zone(
    ds: &DetectionDataset,
    dets: &DetectionSet,
    zone: &Zone,
    config: &EvalConfig,
) -> Result<ZoneMetrics> {
    ZoneEvaluator::new(ds, dets, config.clone())?.evaluate(zone)
}
