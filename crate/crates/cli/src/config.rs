//! Run configuration: flags layered over an optional `key = value` file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use zonal::ap::{coco_iou_thresholds, linspace};
use zonal::assign::{AssignConfig, FilterMode, Strategy, ZoneFilter};
use zonal::zone_eval::hollowing_sweep;
use zonal::{Error, Result};

/// Keys accepted in a config file, spelled like the long flags.
pub const KEYS: &[&str] = &[
    "mode",
    "gt",
    "det",
    "scene",
    "zones",
    "grid",
    "sweep",
    "iou",
    "max-dets",
    "assigner",
    "gamma",
    "top-k",
    "pos-thr",
    "neg-thr",
    "zone-filter",
    "out",
    "format",
    "threads",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Eval,
    Sweep,
    Grid,
    Corr,
    Assign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn wants_csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridShape {
    pub rows: u32,
    pub cols: u32,
}

/// Fully resolved settings. Embedded verbatim in every report except for
/// `threads`, which cannot change results.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub det: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zones: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridShape>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou_thresholds: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_dets: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assigner: Option<AssignConfig>,
    pub out: PathBuf,
    pub format: Format,
    #[serde(skip)]
    pub threads: usize,
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} = {value:?}: {why}"))
}

/// Reads a flat `key = value` file. `#` starts a comment line.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("{}:{}: expected key = value", path.display(), n + 1)));
        };
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("{}:{}: unknown key {key:?}", path.display(), n + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn fraction(key: &str, value: &str) -> Result<f64> {
    let v: f64 = number(key, value)?;
    if !v.is_finite() {
        return Err(bad(key, value, "not a finite number"));
    }
    Ok(v)
}

/// `start:step:stop` or a comma-separated list.
pub fn parse_iou(value: &str) -> Result<Vec<f64>> {
    let key = "iou";
    let parts: Vec<&str> = value.split(':').collect();
    let out = match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (fraction(key, start)?, fraction(key, step)?, fraction(key, stop)?);
            if step <= 0.0 || stop < start {
                return Err(bad(key, value, "expected start:step:stop with step > 0 and stop >= start"));
            }
            let count = ((stop - start) / step).round();
            if (start + count * step - stop).abs() > 1e-9 {
                return Err(bad(key, value, "step does not divide the range"));
            }
            linspace(start, stop, count as usize + 1)
        }
        [_] => value.split(',').map(|t| fraction(key, t)).collect::<Result<_>>()?,
        _ => return Err(bad(key, value, "expected start:step:stop or a comma-separated list")),
    };
    if out.is_empty() {
        return Err(bad(key, value, "no thresholds"));
    }
    if let Some(t) = out.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(bad(key, value, format!("threshold {t} outside (0, 1)")));
    }
    Ok(out)
}

/// `RxC`.
pub fn parse_grid(value: &str) -> Result<GridShape> {
    let Some((r, c)) = value.to_ascii_lowercase().split_once('x').map(|(a, b)| (a.to_string(), b.to_string())) else {
        return Err(bad("grid", value, "expected ROWSxCOLS"));
    };
    let rows: u32 = number("grid", &r)?;
    let cols: u32 = number("grid", &c)?;
    if rows == 0 || cols == 0 {
        return Err(bad("grid", value, "rows and columns must be at least 1"));
    }
    Ok(GridShape { rows, cols })
}

/// `ri:rj,ri:rj,...` or `hollow` for `(0, 0.05j)`, `j = 1..=10`.
pub fn parse_sweep(value: &str) -> Result<Vec<(f64, f64)>> {
    if value.trim() == "hollow" {
        return Ok(hollowing_sweep());
    }
    value
        .split(',')
        .map(|pair| {
            let Some((a, b)) = pair.split_once(':') else {
                return Err(bad("sweep", value, format!("band {pair:?} is not ri:rj")));
            };
            let (ri, rj) = (fraction("sweep", a)?, fraction("sweep", b)?);
            if !(0.0 <= ri && ri < rj && rj <= 0.5) {
                return Err(bad("sweep", value, format!("band {pair:?} needs 0 <= ri < rj <= 0.5")));
            }
            Ok((ri, rj))
        })
        .collect()
}

fn parse_filter(value: &str) -> Result<Option<ZoneFilter>> {
    Ok(match value {
        "none" => None,
        "left-discard" => Some(ZoneFilter::left(FilterMode::Discard)),
        "left-keep1" => Some(ZoneFilter::left(FilterMode::KeepOne)),
        "right-discard" => Some(ZoneFilter::right(FilterMode::Discard)),
        "right-keep1" => Some(ZoneFilter::right(FilterMode::KeepOne)),
        _ => {
            return Err(bad(
                "zone-filter",
                value,
                "expected none, left-discard, left-keep1, right-discard or right-keep1",
            ))
        }
    })
}

fn parse_assigner(settings: &BTreeMap<String, String>) -> Result<AssignConfig> {
    let get = |k: &str| settings.get(k).map(String::as_str);
    let top_k = get("top-k").map_or(Ok(9), |v| number("top-k", v))?;
    let gamma = get("gamma").map_or(Ok(0.0), |v| fraction("gamma", v))?;
    let name = get("assigner").unwrap_or("atss");
    let strategy = match name {
        "max-iou" => Strategy::MaxIou {
            pos_thr: get("pos-thr").map_or(Ok(0.5), |v| fraction("pos-thr", v))?,
            neg_thr: get("neg-thr").map_or(Ok(0.4), |v| fraction("neg-thr", v))?,
        },
        "atss" => Strategy::Atss { top_k },
        "sela" => Strategy::SelaFreq { top_k, gamma },
        "sela-cost" => Strategy::SelaCost { top_k, gamma },
        _ => return Err(bad("assigner", name, "expected max-iou, atss, sela or sela-cost")),
    };
    let config = AssignConfig { strategy, zone_filter: get("zone-filter").map_or(Ok(None), parse_filter)? };
    config.validate()?;
    Ok(config)
}

fn required(settings: &BTreeMap<String, String>, key: &str, mode: &str) -> Result<PathBuf> {
    settings.get(key).map(PathBuf::from).ok_or_else(|| Error::Config(format!("{key} is required in {mode} mode")))
}

/// Builds the run configuration from merged settings.
pub fn resolve(settings: &BTreeMap<String, String>) -> Result<RunConfig> {
    let get = |k: &str| settings.get(k).map(String::as_str);
    let mode_name = get("mode").ok_or_else(|| Error::Config("no mode given".into()))?;
    let mode = match mode_name {
        "eval" => Mode::Eval,
        "sweep" => Mode::Sweep,
        "grid" => Mode::Grid,
        "corr" => Mode::Corr,
        "assign" => Mode::Assign,
        _ => return Err(bad("mode", mode_name, "expected eval, sweep, grid, corr or assign")),
    };
    let format = match get("format").unwrap_or("json") {
        "json" => Format::Json,
        "csv" => Format::Csv,
        "both" => Format::Both,
        other => return Err(bad("format", other, "expected json, csv or both")),
    };
    let threads = get("threads").map_or(Ok(0), |v| number("threads", v))?;
    let zones = match get("zones") {
        Some(v) => {
            let n: u32 = number("zones", v)?;
            if n == 0 {
                return Err(bad("zones", v, "must be at least 1"));
            }
            Some(n)
        }
        None => None,
    };

    let mut config = RunConfig {
        mode,
        gt: None,
        det: None,
        scene: None,
        zones: None,
        grid: None,
        sweep: None,
        iou_thresholds: None,
        max_dets: None,
        assigner: None,
        out: PathBuf::from(get("out").unwrap_or("zonal-report")),
        format,
        threads,
    };

    if mode == Mode::Assign {
        config.scene = Some(required(settings, "scene", mode_name)?);
        config.zones = Some(zones.unwrap_or(5));
        config.assigner = Some(parse_assigner(settings)?);
        return Ok(config);
    }

    config.gt = Some(required(settings, "gt", mode_name)?);
    config.det = Some(required(settings, "det", mode_name)?);
    config.iou_thresholds = Some(get("iou").map_or_else(|| Ok(coco_iou_thresholds()), parse_iou)?);
    let max_dets: usize = get("max-dets").map_or(Ok(100), |v| number("max-dets", v))?;
    if max_dets == 0 {
        return Err(Error::Config("max-dets must be at least 1".into()));
    }
    config.max_dets = Some(max_dets);
    match mode {
        Mode::Eval => config.zones = Some(zones.unwrap_or(5)),
        Mode::Sweep => {
            let spec = get("sweep").ok_or_else(|| Error::Config("sweep is required in sweep mode".into()))?;
            config.sweep = Some(parse_sweep(spec)?);
        }
        Mode::Grid | Mode::Corr => {
            let spec = get("grid").ok_or_else(|| Error::Config(format!("grid is required in {mode_name} mode")))?;
            config.grid = Some(parse_grid(spec)?);
        }
        Mode::Assign => unreachable!(),
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn iou_forms() {
        assert_eq!(parse_iou("0.5:0.05:0.95").unwrap(), coco_iou_thresholds());
        assert_eq!(parse_iou("0.5,0.75").unwrap(), vec![0.5, 0.75]);
        assert_eq!(parse_iou("0.6").unwrap(), vec![0.6]);
        assert!(parse_iou("0.5:0.07:0.95").is_err());
        assert!(parse_iou("0.5,1.0").is_err());
        assert!(parse_iou("a").is_err());
    }

    #[test]
    fn grid_and_sweep() {
        assert_eq!(parse_grid("11x11").unwrap(), GridShape { rows: 11, cols: 11 });
        assert_eq!(parse_grid("2X3").unwrap(), GridShape { rows: 2, cols: 3 });
        assert!(parse_grid("0x3").is_err());
        assert!(parse_grid("3").is_err());
        assert_eq!(parse_sweep("0:0.1,0.1:0.5").unwrap(), vec![(0.0, 0.1), (0.1, 0.5)]);
        assert_eq!(parse_sweep("hollow").unwrap().len(), 10);
        assert!(parse_sweep("0.3:0.2").is_err());
    }

    #[test]
    fn mode_requirements() {
        assert!(matches!(resolve(&settings(&[("mode", "eval"), ("gt", "a")])), Err(Error::Config(_))));
        assert!(matches!(resolve(&settings(&[("mode", "grid"), ("gt", "a"), ("det", "b")])), Err(Error::Config(_))));
        let c = resolve(&settings(&[("mode", "eval"), ("gt", "a"), ("det", "b")])).unwrap();
        assert_eq!(c.zones, Some(5));
        assert_eq!(c.max_dets, Some(100));
        let c =
            resolve(&settings(&[("mode", "assign"), ("scene", "s"), ("assigner", "sela"), ("gamma", "0.2")])).unwrap();
        assert_eq!(c.assigner.unwrap().strategy, Strategy::SelaFreq { top_k: 9, gamma: 0.2 });
        assert!(
            resolve(&settings(&[("mode", "assign"), ("scene", "s"), ("gamma", "-1"), ("assigner", "sela")])).is_err()
        );
    }
}
