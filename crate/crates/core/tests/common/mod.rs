#![allow(dead_code)]

use rand::Rng;
use zonal::{BBox, Category, Detection, DetectionDataset, DetectionSet, GtObject, ImageInfo, Point};

/// Synthetic dataset builder with one shared image size.
pub struct Fixture {
    pub width: f64,
    pub height: f64,
    pub images: Vec<u64>,
    pub categories: Vec<u64>,
    pub gts: Vec<GtObject>,
    pub dets: Vec<Detection>,
}

impl Fixture {
    pub fn new(width: f64, height: f64, images: usize, categories: usize) -> Self {
        Self {
            width,
            height,
            images: (1..=images as u64).collect(),
            categories: (1..=categories as u64).collect(),
            gts: Vec::new(),
            dets: Vec::new(),
        }
    }

    /// Ground truth centred at normalized `(u, v)`.
    pub fn gt_at(&mut self, image: u64, cat: u64, u: f64, v: f64, w: f64, h: f64) -> BBox {
        let b = BBox::centered(Point::new(u * self.width, v * self.height), w, h).unwrap();
        self.gt_box(image, cat, b, false);
        b
    }

    pub fn gt_box(&mut self, image: u64, cat: u64, bbox: BBox, crowd: bool) {
        let id = self.gts.len() as u64 + 1;
        self.gts.push(GtObject { id, image_id: image, category_id: cat, bbox, is_crowd: crowd });
    }

    pub fn det(&mut self, image: u64, cat: u64, bbox: BBox, score: f64) {
        self.dets.push(Detection { image_id: image, category_id: cat, bbox, score });
    }

    pub fn build(&self) -> (DetectionDataset, DetectionSet) {
        let ds = DetectionDataset::new(
            self.images.iter().map(|&id| ImageInfo { id, width: self.width, height: self.height }).collect(),
            self.categories.iter().map(|&id| Category { id, name: format!("c{id}") }).collect(),
            self.gts.clone(),
        )
        .unwrap();
        let dets = DetectionSet::new(&ds, self.dets.clone()).unwrap();
        (ds, dets)
    }
}

/// Fixture with one object per annular ring of `n` rings on each of `images`
/// images, each detected perfectly when `perfect(ring)` is true.
pub fn ring_fixture(n: u32, images: usize, perfect: impl Fn(u32) -> bool) -> (DetectionDataset, DetectionSet) {
    let mut f = Fixture::new(1000.0, 1000.0, images, 1);
    for img in 1..=images as u64 {
        for ring in 0..n {
            // mid-ring on the horizontal centre line
            let r = (ring as f64 + 0.5) / (2.0 * n as f64);
            let b = f.gt_at(img, 1, r, 0.5, 10.0, 10.0);
            if perfect(ring) {
                f.det(img, 1, b, 0.9);
            }
        }
    }
    f.build()
}

// ---------------------------------------------------------------------------
// Brute-force reference AP. Shares no code with the engine: its own overlap
// arithmetic on corner coordinates, its own greedy matcher, and precision at
// each recall level taken as the maximum over every cut-off of the ranked
// list that reaches that recall.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct RefBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl RefBox {
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x0: x, y0: y, x1: x + w, y1: y + h }
    }
    fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
    fn inter(&self, o: &RefBox) -> f64 {
        let w = (self.x1.min(o.x1) - self.x0.max(o.x0)).max(0.0);
        let h = (self.y1.min(o.y1) - self.y0.max(o.y0)).max(0.0);
        w * h
    }
    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }
}

#[derive(Clone, Debug)]
pub struct RefGt {
    pub image: usize,
    pub cat: u64,
    pub b: RefBox,
    pub crowd: bool,
}

#[derive(Clone, Debug)]
pub struct RefDet {
    pub image: usize,
    pub cat: u64,
    pub b: RefBox,
    pub score: f64,
}

fn ref_overlap(d: &RefBox, g: &RefGt) -> f64 {
    let i = d.inter(&g.b);
    if i <= 0.0 {
        return 0.0;
    }
    if g.crowd {
        i / d.area()
    } else {
        i / (d.area() + g.b.area() - i)
    }
}

/// Outcome of one detection: Some(true) TP, Some(false) FP, None ignored.
fn ref_match_image(dets: &[&RefDet], gts: &[&RefGt], thr: f64) -> Vec<Option<bool>> {
    let thr = thr.min(1.0 - 1e-10);
    let mut used = vec![false; gts.len()];
    let mut out = Vec::new();
    for d in dets {
        let mut pick = None;
        let mut best = -1.0;
        for (k, g) in gts.iter().enumerate() {
            let v = ref_overlap(&d.b, g);
            if !g.crowd && !used[k] && v >= thr && v > best {
                best = v;
                pick = Some(k);
            }
        }
        if let Some(k) = pick {
            used[k] = true;
            out.push(Some(true));
        } else if gts.iter().any(|g| g.crowd && ref_overlap(&d.b, g) >= thr) {
            out.push(None);
        } else {
            out.push(Some(false));
        }
    }
    out
}

pub fn ref_recall_levels() -> Vec<f64> {
    let step = 1.0 / 100.0;
    let mut v: Vec<f64> = (0..101).map(|i| i as f64 * step).collect();
    v[100] = 1.0;
    v
}

/// AP of one category from the ranked outcomes, or None without positives.
pub fn ref_ap(ranked: &[bool], n_pos: usize) -> Option<f64> {
    if n_pos == 0 {
        return None;
    }
    let mut cuts = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    for &hit in ranked {
        if hit {
            tp += 1.0
        } else {
            fp += 1.0
        }
        cuts.push((tp / n_pos as f64, tp / (tp + fp)));
    }
    let levels = ref_recall_levels();
    let total: f64 =
        levels.iter().map(|&r| cuts.iter().filter(|(rc, _)| *rc >= r).map(|(_, p)| *p).fold(0.0, f64::max)).sum();
    Some(total / levels.len() as f64)
}

/// Zone AP averaged over defined categories and thresholds. `inside` decides
/// zone membership from a box centre and the image index.
pub fn ref_zone_ap(
    n_images: usize,
    cats: &[u64],
    gts: &[RefGt],
    dets: &[RefDet],
    thresholds: &[f64],
    max_dets: usize,
    inside: impl Fn(usize, (f64, f64)) -> bool,
) -> Option<f64> {
    let mut per_cat = Vec::new();
    for &c in cats {
        let zg: Vec<&RefGt> = gts.iter().filter(|g| g.cat == c && inside(g.image, g.b.center())).collect();
        let n_pos = zg.iter().filter(|g| !g.crowd).count();
        if n_pos == 0 {
            continue;
        }
        let mut aps = Vec::new();
        for &thr in thresholds {
            // (score, image, rank, outcome)
            let mut pooled: Vec<(f64, usize, usize, Option<bool>)> = Vec::new();
            for img in 0..n_images {
                let mut d: Vec<(usize, &RefDet)> = dets
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.image == img && d.cat == c && inside(img, d.b.center()))
                    .collect();
                // score descending, file order on ties
                d.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap().then(a.0.cmp(&b.0)));
                d.truncate(max_dets);
                let dd: Vec<&RefDet> = d.iter().map(|x| x.1).collect();
                let g: Vec<&RefGt> = zg.iter().filter(|g| g.image == img).copied().collect();
                for (rank, o) in ref_match_image(&dd, &g, thr).into_iter().enumerate() {
                    pooled.push((dd[rank].score, img, rank, o));
                }
            }
            pooled.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let ranked: Vec<bool> = pooled.iter().filter_map(|p| p.3).collect();
            aps.push(ref_ap(&ranked, n_pos).unwrap());
        }
        per_cat.push(aps);
    }
    if per_cat.is_empty() {
        return None;
    }
    let t = thresholds.len();
    let mzp: Vec<f64> = (0..t).map(|k| per_cat.iter().map(|a| a[k]).sum::<f64>() / per_cat.len() as f64).collect();
    Some(mzp.iter().sum::<f64>() / t as f64)
}

/// Random small instance: the engine inputs plus the reference's view of them.
pub struct Instance {
    pub fixture: Fixture,
    pub gts: Vec<RefGt>,
    pub dets: Vec<RefDet>,
    pub threshold: f64,
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let (w, h) = (200.0, 150.0);
    let n_img = rng.gen_range(1..=5);
    let n_cat = rng.gen_range(1..=4);
    let mut f = Fixture::new(w, h, n_img, n_cat);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    let n_gt = rng.gen_range(0..=8);
    for _ in 0..n_gt {
        let img = rng.gen_range(0..n_img);
        let cat = rng.gen_range(1..=n_cat as u64);
        let bw = rng.gen_range(10.0..60.0);
        let bh = rng.gen_range(10.0..60.0);
        let x = rng.gen_range(0.0..w - bw);
        let y = rng.gen_range(0.0..h - bh);
        let crowd = rng.gen_bool(0.1);
        f.gt_box(img as u64 + 1, cat, BBox::new(x, y, bw, bh).unwrap(), crowd);
        gts.push(RefGt { image: img, cat, b: RefBox::from_xywh(x, y, bw, bh), crowd });
    }
    let n_det = rng.gen_range(0..=10);
    for _ in 0..n_det {
        let (img, cat, x, y, bw, bh) = if !gts.is_empty() && rng.gen_bool(0.7) {
            let g = &gts[rng.gen_range(0..gts.len())];
            let jit = |r: &mut R| r.gen_range(-6.0..6.0);
            let bw = (g.b.x1 - g.b.x0 + jit(rng)).max(2.0);
            let bh = (g.b.y1 - g.b.y0 + jit(rng)).max(2.0);
            (g.image, g.cat, g.b.x0 + jit(rng), g.b.y0 + jit(rng), bw, bh)
        } else {
            let bw = rng.gen_range(5.0..60.0);
            let bh = rng.gen_range(5.0..60.0);
            (
                rng.gen_range(0..n_img),
                rng.gen_range(1..=n_cat as u64),
                rng.gen_range(-10.0..w),
                rng.gen_range(-10.0..h),
                bw,
                bh,
            )
        };
        // coarse scores so that ties occur
        let score = (rng.gen_range(0..=10) as f64) / 10.0;
        f.det(img as u64 + 1, cat, BBox::new(x, y, bw, bh).unwrap(), score);
        dets.push(RefDet { image: img, cat, b: RefBox::from_xywh(x, y, bw, bh), score });
    }
    let threshold = rng.gen_range(0.3..0.9);
    Instance { fixture: f, gts, dets, threshold }
}
