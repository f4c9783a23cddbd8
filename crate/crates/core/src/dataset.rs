//! COCO-format ground truth and detection results.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ensure_partition, locate, BBox, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtObject {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub is_crowd: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

/// Record-level adjustments made while loading a file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub records: usize,
    pub clamped: usize,
    pub dropped: usize,
}

/// Validated ground-truth corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionDataset {
    images: Vec<ImageInfo>,
    categories: Vec<Category>,
    annotations: Vec<GtObject>,
    image_index: HashMap<u64, usize>,
}

impl DetectionDataset {
    /// Builds a dataset, checking that ids are unique and every annotation
    /// references a declared image and category.
    pub fn new(images: Vec<ImageInfo>, categories: Vec<Category>, annotations: Vec<GtObject>) -> Result<Self> {
        Self::build(images, categories, annotations, Path::new("<memory>"))
    }

    fn build(
        images: Vec<ImageInfo>,
        categories: Vec<Category>,
        annotations: Vec<GtObject>,
        path: &Path,
    ) -> Result<Self> {
        let mut offenders = Vec::new();
        let mut image_index = HashMap::with_capacity(images.len());
        for (k, img) in images.iter().enumerate() {
            if !(img.width > 0.0 && img.height > 0.0 && img.width.is_finite() && img.height.is_finite()) {
                return Err(Error::Range {
                    path: path.to_owned(),
                    message: format!("image {} has size {}x{}", img.id, img.width, img.height),
                });
            }
            if image_index.insert(img.id, k).is_some() {
                offenders.push(format!("duplicate image id {}", img.id));
            }
        }
        let mut cat_ids = HashMap::with_capacity(categories.len());
        for c in &categories {
            if cat_ids.insert(c.id, ()).is_some() {
                offenders.push(format!("duplicate category id {}", c.id));
            }
        }
        for a in &annotations {
            if !image_index.contains_key(&a.image_id) {
                offenders.push(format!("annotation {}: unknown image_id {}", a.id, a.image_id));
            }
            if !cat_ids.contains_key(&a.category_id) {
                offenders.push(format!("annotation {}: unknown category_id {}", a.id, a.category_id));
            }
        }
        if !offenders.is_empty() {
            return Err(Error::Integrity { path: path.to_owned(), offenders });
        }
        Ok(Self { images, categories, annotations, image_index })
    }

    pub fn images(&self) -> &[ImageInfo] {
        &self.images
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn annotations(&self) -> &[GtObject] {
        &self.annotations
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.image_index.get(&id).map(|&k| &self.images[k])
    }

    pub fn has_category(&self, id: u64) -> bool {
        self.categories.iter().any(|c| c.id == id)
    }

    /// COCO annotation JSON for this dataset.
    pub fn to_coco_json(&self) -> serde_json::Value {
        let raw = RawGroundTruth {
            images: self.images.iter().map(|i| RawImage { id: i.id, width: i.width, height: i.height }).collect(),
            categories: self.categories.clone(),
            annotations: self
                .annotations
                .iter()
                .map(|a| RawAnnotation {
                    id: a.id,
                    image_id: a.image_id,
                    category_id: a.category_id,
                    bbox: a.bbox.to_xywh(),
                    iscrowd: a.is_crowd as u8,
                })
                .collect(),
        };
        serde_json::to_value(raw).expect("serializable")
    }
}

#[derive(Serialize, Deserialize)]
struct RawGroundTruth {
    images: Vec<RawImage>,
    categories: Vec<Category>,
    annotations: Vec<RawAnnotation>,
}

#[derive(Serialize, Deserialize)]
struct RawImage {
    id: u64,
    width: f64,
    height: f64,
}

#[derive(Serialize, Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Deserialize)]
struct RawDetection {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    score: f64,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn json_error(text: &str, path: &Path, err: serde_json::Error) -> Error {
    use serde_json::error::Category as C;
    match err.classify() {
        C::Data => Error::Schema { path: path.to_owned(), message: err.to_string() },
        C::Io | C::Syntax | C::Eof => Error::Parse {
            path: path.to_owned(),
            offset: byte_offset(text, err.line(), err.column()),
            message: err.to_string(),
        },
    }
}

/// Clips `[x, y, w, h]` to the image rectangle. Returns the clipped box (if it
/// keeps a positive area) and whether any edge moved.
fn clamp_box(raw: [f64; 4], img: &ImageInfo) -> (Option<BBox>, bool) {
    let [x, y, w, h] = raw;
    let x0 = x.max(0.0);
    let y0 = y.max(0.0);
    let x1 = (x + w).min(img.width);
    let y1 = (y + h).min(img.height);
    let moved = x0 != x || y0 != y || x1 != x + w || y1 != y + h;
    if !moved {
        return (BBox::new(x, y, w, h).ok(), false);
    }
    (BBox::new(x0, y0, fitted_extent(x0, x1), fitted_extent(y0, y1)).ok(), true)
}

// Largest extent with `lo + extent <= hi`, so a clamped box reloads unchanged.
fn fitted_extent(lo: f64, hi: f64) -> f64 {
    let mut e = hi - lo;
    while e > 0.0 && lo + e > hi {
        e = e.next_down();
    }
    e
}

/// Parses COCO annotation JSON held in memory. `path` is only used in errors.
pub fn parse_ground_truth(text: &str, path: &Path) -> Result<(DetectionDataset, LoadStats)> {
    let raw: RawGroundTruth = serde_json::from_str(text).map_err(|e| json_error(text, path, e))?;
    let images: Vec<ImageInfo> =
        raw.images.iter().map(|i| ImageInfo { id: i.id, width: i.width, height: i.height }).collect();
    let by_id: HashMap<u64, ImageInfo> = images.iter().map(|i| (i.id, *i)).collect();

    let mut stats = LoadStats { records: raw.annotations.len(), ..LoadStats::default() };
    let mut annotations = Vec::with_capacity(raw.annotations.len());
    let mut dangling = Vec::new();
    for a in raw.annotations {
        if a.bbox.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range {
                path: path.to_owned(),
                message: format!("annotation {} has a non-finite bbox", a.id),
            });
        }
        let Some(img) = by_id.get(&a.image_id) else {
            dangling.push(a);
            continue;
        };
        let (bbox, moved) = clamp_box(a.bbox, img);
        match bbox {
            Some(bbox) => {
                stats.clamped += moved as usize;
                annotations.push(GtObject {
                    id: a.id,
                    image_id: a.image_id,
                    category_id: a.category_id,
                    bbox,
                    is_crowd: a.iscrowd != 0,
                });
            }
            None => stats.dropped += 1,
        }
    }
    if !dangling.is_empty() {
        return Err(Error::Integrity {
            path: path.to_owned(),
            offenders: dangling
                .iter()
                .map(|a| format!("annotation {}: unknown image_id {}", a.id, a.image_id))
                .collect(),
        });
    }
    let ds = DetectionDataset::build(images, raw.categories, annotations, path)?;
    Ok((ds, stats))
}

pub fn load_ground_truth(path: &Path) -> Result<(DetectionDataset, LoadStats)> {
    parse_ground_truth(&read(path)?, path)
}

/// Scored detections grouped by `(image_id, category_id)`, each group in
/// descending score order with ties kept in input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    groups: BTreeMap<(u64, u64), Vec<Detection>>,
    len: usize,
}

impl DetectionSet {
    pub fn new(ds: &DetectionDataset, detections: Vec<Detection>) -> Result<Self> {
        Self::build(ds, detections, Path::new("<memory>"))
    }

    fn build(ds: &DetectionDataset, detections: Vec<Detection>, path: &Path) -> Result<Self> {
        let mut offenders = Vec::new();
        for (k, d) in detections.iter().enumerate() {
            if !(d.score.is_finite() && (0.0..=1.0).contains(&d.score)) {
                return Err(Error::Range {
                    path: path.to_owned(),
                    message: format!("detection {k} has score {} outside [0, 1]", d.score),
                });
            }
            if ds.image(d.image_id).is_none() {
                offenders.push(format!("detection {k}: unknown image_id {}", d.image_id));
            }
            if !ds.has_category(d.category_id) {
                offenders.push(format!("detection {k}: unknown category_id {}", d.category_id));
            }
        }
        if !offenders.is_empty() {
            return Err(Error::Integrity { path: path.to_owned(), offenders });
        }
        let len = detections.len();
        let mut groups: BTreeMap<(u64, u64), Vec<Detection>> = BTreeMap::new();
        for d in detections {
            groups.entry((d.image_id, d.category_id)).or_default().push(d);
        }
        for g in groups.values_mut() {
            g.sort_by(|a, b| b.score.total_cmp(&a.score));
        }
        Ok(Self { groups, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Score-sorted detections for one image and category.
    pub fn group(&self, image_id: u64, category_id: u64) -> &[Detection] {
        self.groups.get(&(image_id, category_id)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn groups(&self) -> impl Iterator<Item = (&(u64, u64), &[Detection])> {
        self.groups.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

pub fn parse_detections(text: &str, path: &Path, ds: &DetectionDataset) -> Result<(DetectionSet, LoadStats)> {
    let raw: Vec<RawDetection> = serde_json::from_str(text).map_err(|e| json_error(text, path, e))?;
    let mut stats = LoadStats { records: raw.len(), ..LoadStats::default() };
    let mut dets = Vec::with_capacity(raw.len());
    for (k, r) in raw.into_iter().enumerate() {
        let [x, y, w, h] = r.bbox;
        if r.bbox.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range {
                path: path.to_owned(),
                message: format!("detection {k} has a non-finite bbox"),
            });
        }
        match BBox::new(x, y, w, h) {
            Ok(bbox) => dets.push(Detection { image_id: r.image_id, category_id: r.category_id, bbox, score: r.score }),
            Err(_) => stats.dropped += 1,
        }
    }
    Ok((DetectionSet::build(ds, dets, path)?, stats))
}

pub fn load_detections(path: &Path, ds: &DetectionDataset) -> Result<(DetectionSet, LoadStats)> {
    parse_detections(&read(path)?, path, ds)
}

/// Counts non-crowd ground-truth centres per zone of a full partition.
pub fn object_distribution(ds: &DetectionDataset, zones: &[Zone]) -> Result<Vec<u64>> {
    ensure_partition(zones)?;
    let mut counts = vec![0; zones.len()];
    for a in ds.annotations.iter().filter(|a| !a.is_crowd) {
        let img = ds.image(a.image_id).expect("validated reference");
        if let Some(k) = locate(zones, a.bbox.center(), img.width, img.height) {
            counts[k] += 1;
        }
    }
    Ok(counts)
}

/// Per-category variant of [`object_distribution`]; every declared category
/// gets an entry.
pub fn object_distribution_by_category(ds: &DetectionDataset, zones: &[Zone]) -> Result<BTreeMap<u64, Vec<u64>>> {
    ensure_partition(zones)?;
    let mut out: BTreeMap<u64, Vec<u64>> = ds.categories.iter().map(|c| (c.id, vec![0; zones.len()])).collect();
    for a in ds.annotations.iter().filter(|a| !a.is_crowd) {
        let img = ds.image(a.image_id).expect("validated reference");
        if let Some(k) = locate(zones, a.bbox.center(), img.width, img.height) {
            out.get_mut(&a.category_id).expect("validated reference")[k] += 1;
        }
    }
    Ok(out)
}
