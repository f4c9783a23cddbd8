//! Boxes, points and evaluation zones in image pixel space.
//!
//! Annular zones follow the nested-rectangle construction: for a zone count
//! `n`, `R_k` is the closed centred rectangle inset by `r_k = k / (2n)` of the
//! image size on every side, and the zone `z^{i,j}` is `R_i \ R_j`. Grid cells
//! split the image into equal half-open cells whose last row and column are
//! closed on the far edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Clamps the point into `[0, width] x [0, height]`.
    pub fn clamped(&self, width: f64, height: f64) -> Point {
        Point::new(self.x.clamp(0.0, width), self.y.clamp(0.0, height))
    }
}

/// Axis-aligned box, `[x, y, w, h]` with `(x, y)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::Input(format!("box [{x}, {y}, {w}, {h}] has non-finite coordinates")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::Input(format!("box [{x}, {y}, {w}, {h}] must have positive width and height")));
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box centred on `c`.
    pub fn centered(c: Point, w: f64, h: f64) -> Result<Self> {
        Self::new(c.x - w / 2.0, c.y - h / 2.0, w, h)
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Whether `p` lies strictly inside the box.
    pub fn contains_strict(&self, p: &Point) -> bool {
        p.x > self.x && p.x < self.right() && p.y > self.y && p.y < self.bottom()
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, zero for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection over the area of `det` alone; used when matching against
/// crowd regions.
pub fn intersection_over_first(det: &BBox, region: &BBox) -> f64 {
    (det.intersection(region) / det.area()).clamp(0.0, 1.0)
}

/// Distance-from-centre weight: 0 at the image centre, 1 on the border,
/// level sets are centred rectangles.
pub fn spatial_weight(p: Point, width: f64, height: f64) -> Result<f64> {
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::Input(format!("image size {width}x{height} must be positive")));
    }
    if !(p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height) {
        return Err(Error::Input(format!("point ({}, {}) lies outside the {width}x{height} image", p.x, p.y)));
    }
    let dx = (p.x - width / 2.0).abs() / width;
    let dy = (p.y - height / 2.0).abs() / height;
    Ok((2.0 * dx.max(dy)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ZoneKind {
    /// `z^{i,j}` of an `n`-zone annular division.
    Annular {
        i: u32,
        j: u32,
        n: u32,
    },
    GridCell {
        row: u32,
        col: u32,
        rows: u32,
        cols: u32,
    },
    /// Annular band between arbitrary insets `inner < outer`, both in `[0, 0.5]`.
    RangeBand {
        inner: f64,
        outer: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub kind: ZoneKind,
    pub normalized_area: f64,
}

fn ring_area(ri: f64, rj: f64) -> f64 {
    (1.0 - 2.0 * ri).powi(2) - (1.0 - 2.0 * rj).powi(2)
}

fn check_range(ri: f64, rj: f64) -> Result<()> {
    if !(ri.is_finite() && rj.is_finite() && 0.0 <= ri && ri < rj && rj <= 0.5) {
        return Err(Error::Input(format!("zone range ({ri}, {rj}) must satisfy 0 <= r_i < r_j <= 0.5")));
    }
    Ok(())
}

impl Zone {
    pub fn annular(i: u32, j: u32, n: u32) -> Result<Self> {
        if n == 0 || i >= j || j > n {
            return Err(Error::Input(format!("annular zone ({i}, {j}) of {n} requires 0 <= i < j <= n, n >= 1")));
        }
        let kind = ZoneKind::Annular { i, j, n };
        let (ri, rj) = kind.insets().expect("annular has insets");
        Ok(Self { kind, normalized_area: ring_area(ri, rj) })
    }

    pub fn range_band(inner: f64, outer: f64) -> Result<Self> {
        check_range(inner, outer)?;
        Ok(Self { kind: ZoneKind::RangeBand { inner, outer }, normalized_area: ring_area(inner, outer) })
    }

    /// The whole image.
    pub fn full() -> Self {
        Self::range_band(0.0, 0.5).expect("valid range")
    }

    pub fn grid_cell(row: u32, col: u32, rows: u32, cols: u32) -> Result<Self> {
        if rows == 0 || cols == 0 || row >= rows || col >= cols {
            return Err(Error::Input(format!("grid cell ({row}, {col}) invalid for a {rows}x{cols} grid")));
        }
        Ok(Self {
            kind: ZoneKind::GridCell { row, col, rows, cols },
            normalized_area: 1.0 / (rows as f64 * cols as f64),
        })
    }

    /// Short human-readable label, e.g. `z^{0,1}`, `cell(2,3)`, `(0.00,0.25)`.
    pub fn label(&self) -> String {
        match self.kind {
            ZoneKind::Annular { i, j, .. } => format!("z^{{{i},{j}}}"),
            ZoneKind::GridCell { row, col, .. } => format!("cell({row},{col})"),
            ZoneKind::RangeBand { inner, outer } => format!("({inner:.2},{outer:.2})"),
        }
    }

    /// Exact membership test for `p` in a `width x height` image.
    pub fn contains(&self, p: Point, width: f64, height: f64) -> bool {
        if !(p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height) {
            return false;
        }
        match self.kind {
            ZoneKind::GridCell { row, col, rows, cols } => {
                in_cell_span(p.x, col, cols, width) && in_cell_span(p.y, row, rows, height)
            }
            _ => {
                let (ri, rj) = self.kind.insets().expect("ring zone");
                in_centered_rect(p, ri, width, height) && !in_centered_rect(p, rj, width, height)
            }
        }
    }
}

impl ZoneKind {
    /// `(r_i, r_j)` for ring-shaped zones.
    pub fn insets(&self) -> Option<(f64, f64)> {
        match *self {
            ZoneKind::Annular { i, j, n } => {
                let d = 2.0 * n as f64;
                Some((i as f64 / d, j as f64 / d))
            }
            ZoneKind::RangeBand { inner, outer } => Some((inner, outer)),
            ZoneKind::GridCell { .. } => None,
        }
    }
}

// Closed rectangle R_r. R_{0.5} is empty so the centre belongs to the innermost ring.
fn in_centered_rect(p: Point, r: f64, width: f64, height: f64) -> bool {
    if r >= 0.5 {
        return false;
    }
    p.x >= r * width && p.x <= (1.0 - r) * width && p.y >= r * height && p.y <= (1.0 - r) * height
}

fn in_cell_span(v: f64, idx: u32, count: u32, extent: f64) -> bool {
    let lo = idx as f64 * extent / count as f64;
    let hi = (idx + 1) as f64 * extent / count as f64;
    v >= lo && (v < hi || (idx + 1 == count && v <= extent))
}

/// The `n` rings `z^{0,1}, ..., z^{n-1,n}`, outermost first.
pub fn annular_zones(n: u32) -> Result<Vec<Zone>> {
    if n == 0 {
        return Err(Error::Input("zone count must be at least 1".into()));
    }
    (0..n).map(|i| Zone::annular(i, i + 1, n)).collect()
}

/// Row-major `rows x cols` grid of equal cells.
pub fn grid_zones(rows: u32, cols: u32) -> Result<Vec<Zone>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Input(format!("grid must have at least one row and column, got {rows}x{cols}")));
    }
    let mut zones = Vec::with_capacity(rows as usize * cols as usize);
    for row in 0..rows {
        for col in 0..cols {
            zones.push(Zone::grid_cell(row, col, rows, cols)?);
        }
    }
    Ok(zones)
}

/// Checks that `zones` is one of the supported full partitions of the image:
/// a complete annular division, a complete grid in row-major order, or a
/// contiguous chain of range bands from 0 to 0.5.
pub fn ensure_partition(zones: &[Zone]) -> Result<()> {
    let not_partition = |why: &str| Err(Error::Input(format!("zones do not partition the image: {why}")));
    let Some(first) = zones.first() else {
        return not_partition("empty zone list");
    };
    match first.kind {
        ZoneKind::GridCell { rows, cols, .. } => {
            if zones.len() != rows as usize * cols as usize {
                return not_partition("grid cell count mismatch");
            }
            for (k, z) in zones.iter().enumerate() {
                let expect = ZoneKind::GridCell { row: k as u32 / cols, col: k as u32 % cols, rows, cols };
                if z.kind != expect {
                    return not_partition("grid cells missing or out of order");
                }
            }
            Ok(())
        }
        _ => {
            let mut edge = 0.0;
            for z in zones {
                let Some((ri, rj)) = z.kind.insets() else {
                    return not_partition("mixed grid and ring zones");
                };
                if ri != edge {
                    return not_partition("ring zones are not contiguous from the border");
                }
                edge = rj;
            }
            if edge != 0.5 {
                return not_partition("ring zones do not reach the centre");
            }
            Ok(())
        }
    }
}

/// Index of the zone containing `p`, for a validated partition.
pub fn locate(zones: &[Zone], p: Point, width: f64, height: f64) -> Option<usize> {
    zones.iter().position(|z| z.contains(p, width, height))
}
