use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zonal::assign::{
    adaptive_threshold, assign, assignment_zone_stats, atss_assign, load_scenes, max_iou_assign, sela_assign,
    AnchorGrid, AnchorSpec, AssignConfig, FilterMode, Label, Strategy, ZoneFilter,
};
use zonal::geometry::{annular_zones, grid_zones, iou, spatial_weight, BBox, Point};
use zonal::Error;

fn random_scene(rng: &mut ChaCha8Rng) -> (AnchorGrid, Vec<BBox>) {
    let (w, h) = (320.0, 256.0);
    let grid = AnchorGrid::new(w, h, &AnchorSpec { strides: vec![8.0, 16.0, 32.0], scale: 4.0 }).unwrap();
    let gts = (0..rng.gen_range(1..6))
        .map(|_| {
            let bw = rng.gen_range(6.0..150.0);
            let bh = rng.gen_range(6.0..150.0);
            BBox::new(rng.gen_range(-10.0..w - bw + 10.0), rng.gen_range(-10.0..h - bh + 10.0), bw, bh).unwrap()
        })
        .collect();
    (grid, gts)
}

/// Brute-force ATSS/SELA: sorts every level afresh per object, resolves
/// conflicts after the fact.
fn reference_labels(grid: &AnchorGrid, gts: &[BBox], top_k: usize, gamma: f64) -> Vec<Label> {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; grid.anchors.len()];
    for (g, gt) in gts.iter().enumerate() {
        let c = gt.center();
        let mut cands = Vec::new();
        for level in 0..grid.level_ranges.len() {
            let mut on_level: Vec<usize> =
                (0..grid.anchors.len()).filter(|&a| grid.anchors[a].level == level).collect();
            on_level.sort_by(|&a, &b| {
                let da = grid.anchors[a].center.distance(&c);
                let db = grid.anchors[b].center.distance(&c);
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            cands.extend(on_level.into_iter().take(top_k));
        }
        let ious: Vec<f64> = cands.iter().map(|&a| iou(&grid.anchors[a].bbox, gt)).collect();
        let n = ious.len() as f64;
        let mean = ious.iter().sum::<f64>() / n;
        let std = (ious.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        for (&a, &v) in cands.iter().zip(&ious) {
            let p = grid.anchors[a].center;
            let alpha = spatial_weight(p, grid.width, grid.height).unwrap();
            let inside = p.x > gt.x && p.x < gt.right() && p.y > gt.y && p.y < gt.bottom();
            if v >= mean + std - gamma * alpha && inside && best[a].is_none_or(|(_, b)| v > b) {
                best[a] = Some((g, v));
            }
        }
    }
    best.into_iter().map(|b| b.map_or(Label::Negative, |(g, _)| Label::Positive(g))).collect()
}

#[test]
fn atss_and_sela_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let (grid, gts) = random_scene(&mut rng);
        for gamma in [0.0, 0.25, 0.7] {
            let got = sela_assign(&grid, &gts, 9, gamma).unwrap();
            assert_eq!(got.labels, reference_labels(&grid, &gts, 9, gamma));
        }
        assert_eq!(atss_assign(&grid, &gts, 5).unwrap().labels, reference_labels(&grid, &gts, 5, 0.0));
    }
}

#[test]
fn nine_candidate_threshold() {
    let ious: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let t = adaptive_threshold(&ious);
    assert!((t - (0.5 + (0.6f64 / 9.0).sqrt())).abs() < 1e-12);
    assert!((t - 0.7582).abs() < 1e-4);
    let passing: Vec<f64> = ious.iter().copied().filter(|&v| v >= t).collect();
    assert_eq!(passing, vec![0.8, 0.9]);
}

#[test]
fn relaxation_band_only_adds_border_positives() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut gained = 0;
    for _ in 0..30 {
        let (grid, gts) = random_scene(&mut rng);
        let atss = atss_assign(&grid, &gts, 9).unwrap();
        let sela = sela_assign(&grid, &gts, 9, 0.2).unwrap();
        for (a, (x, y)) in atss.labels.iter().zip(&sela.labels).enumerate() {
            if let (Label::Negative, Label::Positive(g)) = (x, y) {
                gained += 1;
                let anchor = &grid.anchors[a];
                let v = iou(&anchor.bbox, &gts[*g]);
                let t = sela.thresholds[*g].unwrap();
                let alpha = spatial_weight(anchor.center, grid.width, grid.height).unwrap();
                assert!(alpha > 0.0);
                assert!(v < t && v >= t - 0.2 * alpha);
            }
        }
        assert_eq!(atss.thresholds, sela.thresholds);
    }
    assert!(gained > 0);
}

#[test]
fn border_candidate_example() {
    // IoU 0.60 against t = 0.7582 at alpha = 1
    let t = adaptive_threshold(&(1..=9).map(|k| k as f64 / 10.0).collect::<Vec<_>>());
    let alpha = spatial_weight(Point::new(0.0, 120.0), 640.0, 480.0).unwrap();
    assert_eq!(alpha, 1.0);
    assert!(0.60 < t);
    assert!(0.60 >= t - 0.2 * alpha);
}

#[test]
fn max_iou_rescues_every_overlapping_object() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let (grid, gts) = random_scene(&mut rng);
        let r = max_iou_assign(&grid, &gts, 0.5, 0.4).unwrap();
        for (g, gt) in gts.iter().enumerate() {
            let overlaps = grid.anchors.iter().any(|a| iou(&a.bbox, gt) > 0.0);
            assert_eq!(r.positives_per_gt[g] > 0, overlaps);
        }
        assert!(r.loss_weights.iter().all(|&w| w == 1.0));
    }
}

#[test]
fn cost_variant_keeps_atss_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (grid, gts) = random_scene(&mut rng);
    let cfg = AssignConfig { strategy: Strategy::SelaCost { top_k: 9, gamma: 0.3 }, zone_filter: None };
    let cost = assign(&grid, &gts, &cfg).unwrap();
    let atss = atss_assign(&grid, &gts, 9).unwrap();
    assert_eq!(cost.labels, atss.labels);
    for (a, l) in cost.labels.iter().enumerate() {
        let w = cost.loss_weights[a];
        match l {
            Label::Positive(_) => {
                let alpha = spatial_weight(grid.anchors[a].center, grid.width, grid.height).unwrap();
                assert!((w - (1.0 + 0.3 * alpha)).abs() < 1e-12);
            }
            _ => assert_eq!(w, 1.0),
        }
    }
}

#[test]
fn centred_objects_leave_outer_rings_empty() {
    let grid = AnchorGrid::new(640.0, 640.0, &AnchorSpec::default()).unwrap();
    let gts = vec![
        BBox::centered(Point::new(320.0, 320.0), 40.0, 40.0).unwrap(),
        BBox::centered(Point::new(300.0, 330.0), 20.0, 60.0).unwrap(),
    ];
    let r = atss_assign(&grid, &gts, 9).unwrap();
    let stats = assignment_zone_stats(&r, &gts, &grid, &annular_zones(5).unwrap()).unwrap();
    assert!(stats[..4].iter().all(|s| s.n_gt == 0 && s.positives == 0 && s.mean_positives_per_gt.is_none()));
    assert_eq!(stats[4].n_gt, 2);
    assert_eq!(stats[4].positives, r.total_positives());
}

#[test]
fn half_image_filters() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let halves = grid_zones(1, 2).unwrap();
    for _ in 0..20 {
        let (grid, gts) = random_scene(&mut rng);
        let discard = AssignConfig {
            strategy: Strategy::Atss { top_k: 9 },
            zone_filter: Some(ZoneFilter::left(FilterMode::Discard)),
        };
        let r = assign(&grid, &gts, &discard).unwrap();
        let stats = assignment_zone_stats(&r, &gts, &grid, &halves).unwrap();
        assert_eq!(stats[0].positives, 0);

        let keep = AssignConfig { zone_filter: Some(ZoneFilter::left(FilterMode::KeepOne)), ..discard };
        let r = assign(&grid, &gts, &keep).unwrap();
        let stats = assignment_zone_stats(&r, &gts, &grid, &halves).unwrap();
        assert!(stats[0].positives <= stats[0].n_gt);
        let full = atss_assign(&grid, &gts, 9).unwrap();
        let right = assignment_zone_stats(&full, &gts, &grid, &halves).unwrap()[1];
        assert!(stats[1].positives <= right.positives);
    }
}

#[test]
fn zone_stats_require_partition() {
    let grid = AnchorGrid::new(64.0, 64.0, &AnchorSpec { strides: vec![8.0], scale: 4.0 }).unwrap();
    let gts = vec![BBox::new(10.0, 10.0, 20.0, 20.0).unwrap()];
    let r = atss_assign(&grid, &gts, 9).unwrap();
    let zones = annular_zones(5).unwrap();
    assert!(matches!(assignment_zone_stats(&r, &gts, &grid, &zones[1..]), Err(Error::Input(_))));
}

#[test]
fn scenes_load_from_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write!(
        file,
        r#"[{{"width": 320, "height": 240, "gts": [[10, 10, 50, 40]]}},
            {{"width": 64, "height": 64, "gts": [], "anchors": {{"strides": [8], "scale": 2}}}}]"#
    )
    .unwrap();
    let scenes = load_scenes(file.path()).unwrap();
    assert_eq!(scenes.len(), 2);
    assert_eq!(scenes[0].grid().unwrap().level_ranges.len(), 5);
    assert_eq!(scenes[1].grid().unwrap().len(), 64);
    assert!(scenes[1].boxes().unwrap().is_empty());

    let missing = file.path().with_extension("missing");
    assert!(matches!(load_scenes(&missing), Err(Error::Io { .. })));
}
