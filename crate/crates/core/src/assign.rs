//! Label-assignment simulator over synthetic anchor grids.
//!
//! Implements max-IoU assignment, ATSS, and the spatially relaxed ATSS
//! criterion `IoU >= t - gamma * alpha(anchor centre)`, together with the
//! cost-sensitive `1 + gamma * alpha` positive weight and the half-image
//! sampling manipulations used to probe spatial bias. Nothing here trains.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ensure_partition, iou, locate, spatial_weight, BBox, Point, Zone};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    /// One pyramid level per stride.
    pub strides: Vec<f64>,
    /// Anchor side length as a multiple of the stride.
    pub scale: f64,
}

impl Default for AnchorSpec {
    fn default() -> Self {
        Self { strides: vec![8.0, 16.0, 32.0, 64.0, 128.0], scale: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anchor {
    pub level: usize,
    pub center: Point,
    pub bbox: BBox,
}

/// Square anchors, one per location, tiled at each stride with centres at
/// `i * stride` (zero centre offset).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorGrid {
    pub width: f64,
    pub height: f64,
    pub anchors: Vec<Anchor>,
    /// `anchors[level_ranges[l].0 .. level_ranges[l].1]` belong to level `l`.
    pub level_ranges: Vec<(usize, usize)>,
}

fn tile(extent: f64, stride: f64) -> Vec<f64> {
    (0..).map(|i| i as f64 * stride).take_while(|&c| c < extent).collect()
}

impl AnchorGrid {
    pub fn new(width: f64, height: f64, spec: &AnchorSpec) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::Input(format!("image size {width}x{height} must be positive")));
        }
        if spec.scale.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || spec.strides.iter().any(|s| s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::Config("anchor strides and scale must be positive".into()));
        }
        let mut anchors = Vec::new();
        let mut level_ranges = Vec::with_capacity(spec.strides.len());
        for (level, &stride) in spec.strides.iter().enumerate() {
            let start = anchors.len();
            let side = stride * spec.scale;
            for cy in tile(height, stride) {
                for cx in tile(width, stride) {
                    let center = Point::new(cx, cy);
                    anchors.push(Anchor { level, center, bbox: BBox::centered(center, side, side)? });
                }
            }
            level_ranges.push((start, anchors.len()));
        }
        Ok(Self { width, height, anchors, level_ranges })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    fn alpha(&self, a: &Anchor) -> f64 {
        spatial_weight(a.center, self.width, self.height).expect("anchor centres lie in the image")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Strategy {
    MaxIou {
        pos_thr: f64,
        neg_thr: f64,
    },
    Atss {
        top_k: usize,
    },
    /// Relaxed positive threshold.
    SelaFreq {
        top_k: usize,
        gamma: f64,
    },
    /// ATSS positives weighted by `1 + gamma * alpha`.
    SelaCost {
        top_k: usize,
        gamma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Drop the object from assignment entirely.
    Discard,
    /// Keep only the object's highest-IoU positive.
    KeepOne,
}

/// Applies `mode` to every object whose centre lies in `region`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneFilter {
    pub region: Zone,
    pub mode: FilterMode,
}

impl ZoneFilter {
    /// Left half of the image.
    pub fn left(mode: FilterMode) -> Self {
        Self { region: Zone::grid_cell(0, 0, 1, 2).expect("valid cell"), mode }
    }

    pub fn right(mode: FilterMode) -> Self {
        Self { region: Zone::grid_cell(0, 1, 1, 2).expect("valid cell"), mode }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignConfig {
    pub strategy: Strategy,
    pub zone_filter: Option<ZoneFilter>,
}

fn check_top_k(top_k: usize) -> Result<()> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma {gamma} must be finite and >= 0")));
    }
    Ok(())
}

impl AssignConfig {
    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            Strategy::MaxIou { pos_thr, neg_thr } => {
                for t in [pos_thr, neg_thr] {
                    if !(t > 0.0 && t < 1.0) {
                        return Err(Error::Config(format!("IoU threshold {t} outside (0, 1)")));
                    }
                }
                if pos_thr < neg_thr {
                    return Err(Error::Config(format!(
                        "positive threshold {pos_thr} below negative threshold {neg_thr}"
                    )));
                }
                Ok(())
            }
            Strategy::Atss { top_k } => check_top_k(top_k),
            Strategy::SelaFreq { top_k, gamma } | Strategy::SelaCost { top_k, gamma } => {
                check_top_k(top_k)?;
                check_gamma(gamma)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "label", content = "gt", rename_all = "snake_case")]
pub enum Label {
    Positive(usize),
    Negative,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentResult {
    /// One label per anchor; positives name the ground-truth index.
    pub labels: Vec<Label>,
    pub positives_per_gt: Vec<usize>,
    /// Adaptive IoU threshold per object (ATSS-family only; `None` for
    /// discarded objects).
    pub thresholds: Vec<Option<f64>>,
    /// Loss weight per anchor; 1 except for cost-sensitive positives.
    pub loss_weights: Vec<f64>,
}

impl AssignmentResult {
    fn from_labels(labels: Vec<Label>, n_gt: usize, thresholds: Vec<Option<f64>>) -> Self {
        let mut positives_per_gt = vec![0; n_gt];
        for l in &labels {
            if let Label::Positive(g) = l {
                positives_per_gt[*g] += 1;
            }
        }
        let loss_weights = vec![1.0; labels.len()];
        Self { labels, positives_per_gt, thresholds, loss_weights }
    }

    pub fn total_positives(&self) -> usize {
        self.positives_per_gt.iter().sum()
    }
}

/// `1 + gamma * alpha(p)`.
pub fn sela_loss_weight(p: Point, width: f64, height: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(1.0 + gamma * spatial_weight(p, width, height)?)
}

fn ensure_grid(grid: &AnchorGrid) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Input("anchor grid has no anchors".into()));
    }
    Ok(())
}

/// Max-IoU assignment with the usual low-quality rescue: every object also
/// claims its single best anchor if their IoU is positive.
pub fn max_iou_assign(grid: &AnchorGrid, gts: &[BBox], pos_thr: f64, neg_thr: f64) -> Result<AssignmentResult> {
    AssignConfig { strategy: Strategy::MaxIou { pos_thr, neg_thr }, zone_filter: None }.validate()?;
    ensure_grid(grid)?;
    let active = vec![true; gts.len()];
    Ok(max_iou_core(grid, gts, &active, pos_thr, neg_thr))
}

fn max_iou_core(grid: &AnchorGrid, gts: &[BBox], active: &[bool], pos_thr: f64, neg_thr: f64) -> AssignmentResult {
    let table: Vec<Vec<f64>> = grid.anchors.iter().map(|a| gts.iter().map(|g| iou(&a.bbox, g)).collect()).collect();
    let mut labels: Vec<Label> = table
        .iter()
        .map(|row| {
            let best =
                row.iter().enumerate().filter(|(g, _)| active[*g]).fold(None, |best: Option<(usize, f64)>, (g, &v)| {
                    match best {
                        Some((_, b)) if b >= v => best,
                        _ => Some((g, v)),
                    }
                });
            match best {
                Some((g, v)) if v >= pos_thr => Label::Positive(g),
                Some((_, v)) if v >= neg_thr => Label::Ignore,
                _ => Label::Negative,
            }
        })
        .collect();
    for g in (0..gts.len()).filter(|&g| active[g]) {
        let mut best: Option<(usize, f64)> = None;
        for (a, row) in table.iter().enumerate() {
            if best.is_none_or(|(_, b)| row[g] > b) {
                best = Some((a, row[g]));
            }
        }
        if let Some((a, v)) = best {
            if v > 0.0 {
                labels[a] = Label::Positive(g);
            }
        }
    }
    AssignmentResult::from_labels(labels, gts.len(), vec![None; gts.len()])
}

/// Candidate anchors of one object: the `top_k` closest anchor centres on
/// every level, nearest first, ties by anchor index.
fn candidates(grid: &AnchorGrid, gt: &BBox, top_k: usize) -> Vec<usize> {
    let c = gt.center();
    let mut out = Vec::new();
    for &(start, end) in &grid.level_ranges {
        let mut level: Vec<(f64, usize)> = (start..end).map(|a| (grid.anchors[a].center.distance(&c), a)).collect();
        level.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        out.extend(level.into_iter().take(top_k).map(|(_, a)| a));
    }
    out
}

/// `mean + population std` of the candidate IoUs.
pub fn adaptive_threshold(ious: &[f64]) -> f64 {
    let n = ious.len() as f64;
    let mean = ious.iter().sum::<f64>() / n;
    let var = ious.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    mean + var.sqrt()
}

fn atss_core(grid: &AnchorGrid, gts: &[BBox], active: &[bool], top_k: usize, gamma: f64) -> AssignmentResult {
    // best (gt, iou) claim per anchor
    let mut claim: Vec<Option<(usize, f64)>> = vec![None; grid.len()];
    let mut thresholds = vec![None; gts.len()];
    for (g, gt) in gts.iter().enumerate() {
        if !active[g] {
            continue;
        }
        let cands = candidates(grid, gt, top_k);
        let ious: Vec<f64> = cands.iter().map(|&a| iou(&grid.anchors[a].bbox, gt)).collect();
        let t = adaptive_threshold(&ious);
        thresholds[g] = Some(t);
        for (&a, &v) in cands.iter().zip(&ious) {
            let anchor = &grid.anchors[a];
            let bar = t - gamma * grid.alpha(anchor);
            if v >= bar && gt.contains_strict(&anchor.center) && claim[a].is_none_or(|(_, b)| v > b) {
                claim[a] = Some((g, v));
            }
        }
    }
    let labels = claim.into_iter().map(|c| c.map_or(Label::Negative, |(g, _)| Label::Positive(g))).collect();
    AssignmentResult::from_labels(labels, gts.len(), thresholds)
}

pub fn atss_assign(grid: &AnchorGrid, gts: &[BBox], top_k: usize) -> Result<AssignmentResult> {
    assign(grid, gts, &AssignConfig { strategy: Strategy::Atss { top_k }, zone_filter: None })
}

/// ATSS with the positive test relaxed to `IoU >= t - gamma * alpha`.
pub fn sela_assign(grid: &AnchorGrid, gts: &[BBox], top_k: usize, gamma: f64) -> Result<AssignmentResult> {
    assign(grid, gts, &AssignConfig { strategy: Strategy::SelaFreq { top_k, gamma }, zone_filter: None })
}

fn filtered(grid: &AnchorGrid, gts: &[BBox], filter: Option<&ZoneFilter>) -> Vec<bool> {
    gts.iter()
        .map(|g| {
            filter.is_some_and(|f| {
                f.region.contains(g.center().clamped(grid.width, grid.height), grid.width, grid.height)
            })
        })
        .collect()
}

/// Runs the configured strategy, including any zone filter.
pub fn assign(grid: &AnchorGrid, gts: &[BBox], config: &AssignConfig) -> Result<AssignmentResult> {
    config.validate()?;
    ensure_grid(grid)?;
    let hit = filtered(grid, gts, config.zone_filter.as_ref());
    let discard = matches!(config.zone_filter, Some(ZoneFilter { mode: FilterMode::Discard, .. }));
    let active: Vec<bool> = hit.iter().map(|&h| !(h && discard)).collect();

    let mut result = match config.strategy {
        Strategy::MaxIou { pos_thr, neg_thr } => max_iou_core(grid, gts, &active, pos_thr, neg_thr),
        Strategy::Atss { top_k } | Strategy::SelaCost { top_k, .. } => atss_core(grid, gts, &active, top_k, 0.0),
        Strategy::SelaFreq { top_k, gamma } => atss_core(grid, gts, &active, top_k, gamma),
    };

    if matches!(config.zone_filter, Some(ZoneFilter { mode: FilterMode::KeepOne, .. })) {
        for (g, gt) in gts.iter().enumerate().filter(|(g, _)| hit[*g]) {
            let keep = result
                .labels
                .iter()
                .enumerate()
                .filter(|(_, l)| **l == Label::Positive(g))
                .map(|(a, _)| (a, iou(&grid.anchors[a].bbox, gt)))
                .fold(None, |best: Option<(usize, f64)>, (a, v)| match best {
                    Some((_, b)) if b >= v => best,
                    _ => Some((a, v)),
                });
            for (a, l) in result.labels.iter_mut().enumerate() {
                if *l == Label::Positive(g) && Some(a) != keep.map(|k| k.0) {
                    *l = Label::Negative;
                }
            }
        }
        result = AssignmentResult::from_labels(result.labels, gts.len(), result.thresholds);
    }

    if let Strategy::SelaCost { gamma, .. } = config.strategy {
        for (a, l) in result.labels.iter().enumerate() {
            if let Label::Positive(_) = l {
                result.loss_weights[a] = 1.0 + gamma * grid.alpha(&grid.anchors[a]);
            }
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneSamplingStats {
    pub zone: Zone,
    pub n_gt: usize,
    pub positives: usize,
    pub mean_positives_per_gt: Option<f64>,
}

/// Per-zone object counts and positive totals, objects located by centre.
pub fn assignment_zone_stats(
    result: &AssignmentResult,
    gts: &[BBox],
    grid: &AnchorGrid,
    zones: &[Zone],
) -> Result<Vec<ZoneSamplingStats>> {
    ensure_partition(zones)?;
    if result.positives_per_gt.len() != gts.len() {
        return Err(Error::Input(format!(
            "assignment covers {} objects, {} given",
            result.positives_per_gt.len(),
            gts.len()
        )));
    }
    let mut stats: Vec<ZoneSamplingStats> = zones
        .iter()
        .map(|&zone| ZoneSamplingStats { zone, n_gt: 0, positives: 0, mean_positives_per_gt: None })
        .collect();
    for (g, gt) in gts.iter().enumerate() {
        let c = gt.center().clamped(grid.width, grid.height);
        if let Some(k) = locate(zones, c, grid.width, grid.height) {
            stats[k].n_gt += 1;
            stats[k].positives += result.positives_per_gt[g];
        }
    }
    for s in &mut stats {
        if s.n_gt > 0 {
            s.mean_positives_per_gt = Some(s.positives as f64 / s.n_gt as f64);
        }
    }
    Ok(stats)
}

/// One simulated image: size, object boxes `[x, y, w, h]`, optional anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: f64,
    pub height: f64,
    pub gts: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<AnchorSpec>,
}

impl Scene {
    pub fn boxes(&self) -> Result<Vec<BBox>> {
        self.gts.iter().map(|&[x, y, w, h]| BBox::new(x, y, w, h)).collect()
    }

    pub fn grid(&self) -> Result<AnchorGrid> {
        AnchorGrid::new(self.width, self.height, &self.anchors.clone().unwrap_or_default())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SceneFile {
    Many(Vec<Scene>),
    One(Scene),
}

/// Reads a scene fixture: a single scene object or an array of scenes.
pub fn load_scenes(path: &Path) -> Result<Vec<Scene>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    parse_scenes(&text, path)
}

pub fn parse_scenes(text: &str, path: &Path) -> Result<Vec<Scene>> {
    let file: SceneFile =
        serde_json::from_str(text).map_err(|e| Error::Schema { path: path.to_owned(), message: e.to_string() })?;
    Ok(match file {
        SceneFile::Many(v) => v,
        SceneFile::One(s) => vec![s],
    })
}
