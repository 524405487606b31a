//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use geovl::geometry::{LabeledDetection, Point2D, QuadBox};
use geovl::metrics::{ImageDetections, Interpolation};
use geovl::resolution::{ImageGeometry, ResizePlan};
use num::rational::Ratio;
use num::{BigInt, BigRational, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Convex quad with vertices on a rotated ellipse, in arbitrary order and
/// orientation.
pub fn random_convex_quad(r: &mut ChaCha8Rng, cx: f64, cy: f64, min_radius: f64, max_radius: f64) -> QuadBox {
    let a = r.random_range(min_radius..max_radius);
    let b = r.random_range(min_radius..max_radius);
    let rot: f64 = r.random_range(0.0..std::f64::consts::PI);
    let mut angles: Vec<f64> = loop {
        let mut v: Vec<f64> = (0..4).map(|_| r.random_range(0.0..std::f64::consts::TAU)).collect();
        v.sort_by(f64::total_cmp);
        let gaps_ok = (0..4).all(|i| {
            let next = if i == 3 { v[0] + std::f64::consts::TAU } else { v[i + 1] };
            next - v[i] > 0.35
        });
        if gaps_ok {
            break v;
        }
    };
    if r.random_bool(0.5) {
        angles.reverse();
    }
    let shift = r.random_range(0..4);
    angles.rotate_left(shift);
    let pts: Vec<Point2D> = angles
        .iter()
        .map(|t| {
            let (x, y) = (a * t.cos(), b * t.sin());
            Point2D::new(cx + x * rot.cos() - y * rot.sin(), cy + x * rot.sin() + y * rot.cos())
        })
        .collect();
    QuadBox::new([pts[0], pts[1], pts[2], pts[3]])
}

/// `[lo, hi]` x-extent of a convex polygon along the horizontal line `y`.
fn row_interval(poly: &[Point2D], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let n = poly.len();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        if (p.y - y) * (q.y - y) > 0.0 || p.y == q.y {
            continue;
        }
        let x = p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y);
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo <= hi).then_some((lo, hi))
}

/// Number of cell centres `(k + 0.5) * h` inside `[a, b]`.
fn centres_in(a: f64, b: f64, h: f64) -> i64 {
    let first = (a / h - 0.5).ceil() as i64;
    let last = (b / h - 0.5).floor() as i64;
    (last - first + 1).max(0)
}

/// Cell-centre rasterization of two convex polygons at step `h`:
/// returns (|A|, |B|, |A ∩ B|) in cell counts.
pub fn raster_counts(a: &[Point2D], b: &[Point2D], h: f64) -> (i64, i64, i64) {
    let ys = a.iter().chain(b).map(|p| p.y);
    let ymin = ys.clone().fold(f64::INFINITY, f64::min);
    let ymax = ys.fold(f64::NEG_INFINITY, f64::max);
    let (r0, r1) = ((ymin / h - 0.5).ceil() as i64, (ymax / h - 0.5).floor() as i64);
    let (mut na, mut nb, mut ni) = (0, 0, 0);
    for k in r0..=r1 {
        let y = (k as f64 + 0.5) * h;
        let ia = row_interval(a, y);
        let ib = row_interval(b, y);
        if let Some((l, u)) = ia {
            na += centres_in(l, u, h);
        }
        if let Some((l, u)) = ib {
            nb += centres_in(l, u, h);
        }
        if let (Some((l1, u1)), Some((l2, u2))) = (ia, ib) {
            ni += centres_in(l1.max(l2), u1.min(u2), h);
        }
    }
    (na, nb, ni)
}

pub fn raster_iou(a: &QuadBox, b: &QuadBox, h: f64) -> f64 {
    let (na, nb, ni) = raster_counts(&a.vertices, &b.vertices, h);
    let union = na + nb - ni;
    if union == 0 {
        0.0
    } else {
        ni as f64 / union as f64
    }
}

pub fn raster_area(a: &QuadBox, h: f64) -> f64 {
    let (na, _, _) = raster_counts(&a.vertices, &a.vertices, h);
    na as f64 * h * h
}

fn ratio(n: usize, d: usize) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact precision/recall-area AP over a ranked TP/FP list.
pub fn ap_oracle(flags: &[bool], n_gt: usize, interp: Interpolation) -> Option<f64> {
    if n_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let mut tp = 0;
    let mut pr: Vec<(BigRational, BigRational)> = Vec::new();
    for (i, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        pr.push((ratio(tp, i + 1), ratio(tp, n_gt)));
    }
    let best_from = |k: usize| {
        pr[k..]
            .iter()
            .map(|(p, _)| p.clone())
            .max()
            .unwrap_or_else(BigRational::zero)
    };
    let ap = match interp {
        Interpolation::Voc07 => {
            let mut sum = BigRational::zero();
            for i in 0..=10 {
                let t = ratio(i, 10);
                let m = pr
                    .iter()
                    .filter(|(_, r)| *r >= t)
                    .map(|(p, _)| p.clone())
                    .max()
                    .unwrap_or_else(BigRational::zero);
                sum += m;
            }
            sum / ratio(11, 1)
        }
        Interpolation::AllPoints => {
            let mut sum = BigRational::zero();
            let mut prev = BigRational::zero();
            for (k, (_, rk)) in pr.iter().enumerate() {
                let r = rk.clone();
                if r != prev {
                    sum += (r.clone() - prev) * best_from(k);
                    prev = r;
                }
            }
            sum
        }
    };
    ap.to_f64()
}

pub fn square(cat: &str, x: f64, y: f64, s: f64) -> LabeledDetection {
    LabeledDetection::new(cat, QuadBox::from_coords([x, y, x + s, y, x + s, y + s, x, y + s]))
}

pub struct ApFixture {
    pub preds: ImageDetections,
    pub gts: ImageDetections,
    pub n_gt: usize,
    pub n_tp: usize,
    pub n_fp: usize,
}

/// Score-free detection fixture: objects on a non-overlapping grid; 80% of
/// ground truth is hit by a prediction shifted by a ninth of its side
/// (IoU 0.8), and false positives make up 20% of predictions.
pub fn ap_stability_fixture(seed: u64, images: usize, classes: usize, gt_per_image: usize) -> ApFixture {
    let mut r = rng(seed);
    let names: Vec<String> = (0..classes).map(|c| format!("class-{c:02}")).collect();
    let cell = 100.0;
    let cells: Vec<(usize, usize)> = (0..20).flat_map(|i| (0..20).map(move |j| (i, j))).collect();
    let (mut preds, mut gts) = (BTreeMap::new(), BTreeMap::new());
    let (mut n_gt, mut n_tp, mut n_fp) = (0, 0, 0);
    for img in 0..images {
        let mut slots = cells.clone();
        slots.shuffle(&mut r);
        let mut g = Vec::new();
        let mut p = Vec::new();
        let mut hits = 0;
        for &(i, j) in &slots[..gt_per_image] {
            let side = r.random_range(20.0..60.0);
            let (x, y) = (j as f64 * cell + 10.0, i as f64 * cell + 10.0);
            let cat = &names[r.random_range(0..classes)];
            g.push(square(cat, x, y, side));
            if r.random_bool(0.8) {
                p.push(square(cat, x + side / 9.0, y, side));
                hits += 1;
            }
        }
        let fp = (hits + 2) / 4;
        for &(i, j) in &slots[gt_per_image..gt_per_image + fp] {
            let side = r.random_range(20.0..60.0);
            let cat = &names[r.random_range(0..classes)];
            p.push(square(cat, j as f64 * cell + 10.0, i as f64 * cell + 10.0, side));
        }
        p.shuffle(&mut r);
        n_gt += g.len();
        n_tp += hits;
        n_fp += fp;
        let id = format!("img-{img:04}");
        gts.insert(id.clone(), g);
        preds.insert(id, p);
    }
    ApFixture {
        preds,
        gts,
        n_gt,
        n_tp,
        n_fp,
    }
}

/// Grid cell of a point using the floor split rule, written out directly.
pub fn centroid_bucket(q: &QuadBox, g: ImageGeometry) -> usize {
    let cx = (q.vertices[0].x + q.vertices[1].x + q.vertices[2].x + q.vertices[3].x) / 4.0;
    let cy = (q.vertices[0].y + q.vertices[1].y + q.vertices[2].y + q.vertices[3].y) / 4.0;
    let col = usize::from(cx >= f64::from(g.width / 3)) + usize::from(cx >= f64::from(2 * g.width / 3));
    let row = usize::from(cy >= f64::from(g.height / 3)) + usize::from(cy >= f64::from(2 * g.height / 3));
    row * 3 + col
}

/// Native crop for an integer downsampled ROI, in exact rational arithmetic.
pub fn crop_oracle(roi: [i64; 4], plan: &ResizePlan, min_side: i64) -> [f64; 4] {
    let axis = |lo: i64, hi: i64, src: u32, dst: u32| -> (i64, i64) {
        let n = Ratio::from_integer(i64::from(src));
        let f = Ratio::new(i64::from(src), i64::from(dst));
        let clamp = |v: Ratio<i64>| v.max(Ratio::from_integer(0)).min(n);
        let (mut a, mut b) = (clamp(f * lo), clamp(f * hi));
        let m = Ratio::from_integer(min_side);
        if b - a < m {
            let side = m.min(n);
            let mid = (a + b) / 2;
            a = (mid - side / 2).max(Ratio::from_integer(0)).min(n - side);
            b = a + side;
        }
        (a.floor().to_integer(), b.ceil().to_integer().min(i64::from(src)))
    };
    let (x1, x2) = axis(roi[0], roi[2], plan.source.width, plan.target.width);
    let (y1, y2) = axis(roi[1], roi[3], plan.source.height, plan.target.height);
    [x1, y1, x2, y2].map(|v| v as f64)
}
