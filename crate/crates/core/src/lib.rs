//! Zone-restricted object-detection evaluation.
//!
//! Ground truths and detections are assigned to image zones by their box
//! centres; Average Precision is computed per zone (ZP), combined into an
//! area-weighted spatial-equilibrium score (SP) and a zone variance. A small
//! label-assignment simulator shows how spatially relaxed ATSS changes the
//! sampling of objects near the image border.

pub mod ap;
pub mod assign;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod report;
pub mod stats;
pub mod zone_eval;

pub use ap::{average_precision, evaluate_zone, match_detections, EvalConfig, MatchRecord, PrCurve, ZoneEvaluator};
pub use dataset::{
    load_detections, load_ground_truth, object_distribution, Category, Detection, DetectionDataset, DetectionSet,
    GtObject, ImageInfo, LoadStats,
};
pub use error::{Error, Result};
pub use geometry::{annular_zones, grid_zones, iou, spatial_weight, BBox, Point, Zone, ZoneKind};
pub use zone_eval::{
    grid_evaluation, range_sweep, spatial_equilibrium_precision, zone_evaluation, zone_variance, GridReport,
    ZoneMetrics, ZoneReport,
};
