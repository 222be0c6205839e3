//! Reference oracles for nbbox tests.
//!
//! Everything here is written from first principles and shares no code with
//! `nbbox-core`: boxes are plain `[x_c, y_c, w, h, theta_deg]` arrays and
//! polygons plain `(x, y)` slices.

use std::collections::{BTreeMap, BTreeSet};

pub use rand;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub type Box5 = [f64; 5];
pub type Pt = (f64, f64);

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Corners of a box by an explicit 2×2 rotation matrix applied to `(±w/2, ±h/2)`.
pub fn corners(b: Box5) -> [Pt; 4] {
    let [xc, yc, w, h, deg] = b;
    let t = deg * std::f64::consts::PI / 180.0;
    let m = [[t.cos(), -t.sin()], [t.sin(), t.cos()]];
    [(-w / 2.0, -h / 2.0), (w / 2.0, -h / 2.0), (w / 2.0, h / 2.0), (-w / 2.0, h / 2.0)]
        .map(|(x, y)| (xc + m[0][0] * x + m[0][1] * y, yc + m[1][0] * x + m[1][1] * y))
}

pub fn shoelace(p: &[Pt]) -> f64 {
    let n = p.len();
    (0..n).map(|i| p[i].0 * p[(i + 1) % n].1 - p[(i + 1) % n].0 * p[i].1).sum::<f64>() / 2.0
}

/// Horizontal chord of a convex polygon at height `y`.
fn chord(poly: &[Pt], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        if (p.1 <= y && y <= q.1) || (q.1 <= y && y <= p.1) {
            if p.1 == q.1 {
                lo = lo.min(p.0.min(q.0));
                hi = hi.max(p.0.max(q.0));
            } else {
                let x = p.0 + (y - p.1) * (q.0 - p.0) / (q.1 - p.1);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn bounds(polys: &[&[Pt]]) -> (f64, f64, f64, f64) {
    let all = polys.iter().flat_map(|p| p.iter());
    all.fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |(x0, x1, y0, y1), &(x, y)| {
        (x0.min(x), x1.max(x), y0.min(y), y1.max(y))
    })
}

/// IoU of two convex polygons by rasterizing into `rows` horizontal scanlines
/// (midpoint sampling) and measuring chord overlap exactly per row.
pub fn scanline_iou(a: &[Pt], b: &[Pt], rows: usize) -> f64 {
    let (_, _, y0, y1) = bounds(&[a, b]);
    let dy = (y1 - y0) / rows as f64;
    let (mut inter, mut union) = (0.0, 0.0);
    for r in 0..rows {
        let y = y0 + (r as f64 + 0.5) * dy;
        let ca = chord(a, y);
        let cb = chord(b, y);
        let la = ca.map_or(0.0, |c| c.1 - c.0);
        let lb = cb.map_or(0.0, |c| c.1 - c.0);
        let li = match (ca, cb) {
            (Some(p), Some(q)) => (p.1.min(q.1) - p.0.max(q.0)).max(0.0),
            _ => 0.0,
        };
        inter += li;
        union += la + lb - li;
    }
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

pub fn scanline_box_iou(a: Box5, b: Box5, rows: usize) -> f64 {
    scanline_iou(&corners(a), &corners(b), rows)
}

fn inside_convex(poly: &[Pt], x: f64, y: f64) -> bool {
    let mut sign = 0.0f64;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let c = (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}

/// IoU by counting cell centres of an `n × n` grid over the union's bounding box.
pub fn pixel_iou(a: &[Pt], b: &[Pt], n: usize) -> f64 {
    let (x0, x1, y0, y1) = bounds(&[a, b]);
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (mut both, mut either) = (0u64, 0u64);
    for j in 0..n {
        let y = y0 + (j as f64 + 0.5) * dy;
        for i in 0..n {
            let x = x0 + (i as f64 + 0.5) * dx;
            let (ia, ib) = (inside_convex(a, x, y), inside_convex(b, x, y));
            both += (ia && ib) as u64;
            either += (ia || ib) as u64;
        }
    }
    both as f64 / either as f64
}

fn rotated_aabb_area(points: &[Pt], deg: f64) -> f64 {
    let t = deg.to_radians();
    let (s, c) = t.sin_cos();
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        let u = x * c + y * s;
        let v = -x * s + y * c;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    (u1 - u0) * (v1 - v0)
}

/// Minimum enclosing-rectangle area by sweeping orientations over [0°, 90°)
/// at 0.01° steps, then zooming into each of the best local minima with
/// successively finer sweeps.
pub fn min_rect_area_by_sweep(points: &[Pt]) -> f64 {
    const STEP: f64 = 0.01;
    let n = 9000;
    let coarse: Vec<f64> = (0..n).map(|k| rotated_aabb_area(points, k as f64 * STEP)).collect();
    let mut minima: Vec<usize> = (0..n).filter(|&k| coarse[k] <= coarse[(k + n - 1) % n] && coarse[k] <= coarse[(k + 1) % n]).collect();
    minima.sort_by(|&a, &b| coarse[a].total_cmp(&coarse[b]));
    minima.truncate(24);
    let mut best = coarse.iter().copied().fold(f64::INFINITY, f64::min);
    for k in minima {
        let (mut center, mut half) = (k as f64 * STEP, STEP);
        for _ in 0..12 {
            let samples = 40;
            let mut local = (f64::INFINITY, center);
            for j in 0..=samples {
                let ang = center - half + 2.0 * half * j as f64 / samples as f64;
                let a = rotated_aabb_area(points, ang);
                if a < local.0 {
                    local = (a, ang);
                }
            }
            best = best.min(local.0);
            center = local.1;
            half /= 10.0;
        }
    }
    best
}

/// A random box with center in `[-span, span]²`, sides in `[min_side, max_side]`, any angle.
pub fn random_box(rng: &mut StdRng, span: f64, min_side: f64, max_side: f64) -> Box5 {
    [
        rng.random_range(-span..span),
        rng.random_range(-span..span),
        rng.random_range(min_side..max_side),
        rng.random_range(min_side..max_side),
        rng.random_range(-180.0..180.0),
    ]
}

/// A box perturbed from `b` so the pair usually overlaps.
pub fn nearby_box(rng: &mut StdRng, b: Box5) -> Box5 {
    let scale = b[2].max(b[3]);
    [
        b[0] + rng.random_range(-0.6..0.6) * scale,
        b[1] + rng.random_range(-0.6..0.6) * scale,
        b[2] * rng.random_range(0.5..1.5),
        b[3] * rng.random_range(0.5..1.5),
        b[4] + rng.random_range(-60.0..60.0),
    ]
}

// ---------------------------------------------------------------- evaluation

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    Ignored,
}

/// Exhaustive matcher: enumerates every assignment of detections (taken in
/// descending score order, ties by index) to ground truths or to nothing, with
/// normal ground truths used at most once and assignments requiring
/// `iou >= thr`, and returns the assignment that is lexicographically best in
/// score order, comparing `(iou, -gt_index)` per detection (unassigned lowest).
/// Outcomes are indexed by detection.
pub fn brute_force_match(scores: &[f64], difficult: &[bool], iou: &[Vec<f64>], thr: f64) -> Vec<Outcome> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    fn key(a: Option<usize>, iou_row: &[f64]) -> (f64, i64) {
        match a {
            None => (f64::NEG_INFINITY, 0),
            Some(g) => (iou_row[g], -(g as i64)),
        }
    }

    let mut all: Vec<Vec<Option<usize>>> = Vec::new();
    let mut cur = Vec::new();
    fn rec(k: usize, order: &[usize], difficult: &[bool], iou: &[Vec<f64>], thr: f64, cur: &mut Vec<Option<usize>>, all: &mut Vec<Vec<Option<usize>>>) {
        if k == order.len() {
            all.push(cur.clone());
            return;
        }
        let d = order[k];
        cur.push(None);
        rec(k + 1, order, difficult, iou, thr, cur, all);
        cur.pop();
        for g in 0..difficult.len() {
            let used = !difficult[g] && cur.contains(&Some(g));
            if !used && iou[d][g] >= thr {
                cur.push(Some(g));
                rec(k + 1, order, difficult, iou, thr, cur, all);
                cur.pop();
            }
        }
    }
    rec(0, &order, difficult, iou, thr, &mut cur, &mut all);

    let best = all
        .into_iter()
        .max_by(|x, y| {
            for (k, &d) in order.iter().enumerate() {
                let (kx, ky) = (key(x[k], &iou[d]), key(y[k], &iou[d]));
                match kx.partial_cmp(&ky).unwrap() {
                    std::cmp::Ordering::Equal => continue,
                    o => return o,
                }
            }
            std::cmp::Ordering::Equal
        })
        .unwrap_or_default();

    let mut out = vec![Outcome::FalsePositive; scores.len()];
    for (k, &d) in order.iter().enumerate() {
        out[d] = match best.get(k).copied().flatten() {
            None => Outcome::FalsePositive,
            Some(g) if difficult[g] => Outcome::Ignored,
            Some(_) => Outcome::TruePositive,
        };
    }
    out
}

/// AP from ranked TP flags by direct enumeration of prefix precision/recall.
/// Recall thresholds are compared in exact integer arithmetic.
pub fn brute_ap(ranked_tp: &[bool], num_gt: usize, eleven_point: bool) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let prefixes: Vec<(usize, usize)> = (1..=ranked_tp.len()).map(|k| (ranked_tp[..k].iter().filter(|t| **t).count(), k)).collect();
    let precision = |(tp, k): (usize, usize)| tp as f64 / k as f64;
    if eleven_point {
        let mut total = 0.0;
        for t in 0..=10usize {
            let p = prefixes.iter().filter(|(tp, _)| tp * 10 >= t * num_gt).map(|&x| precision(x)).fold(0.0, f64::max);
            total += p;
        }
        Some(total / 11.0)
    } else {
        let mut total = 0.0;
        for (k, &is_tp) in ranked_tp.iter().enumerate() {
            if is_tp {
                let env = prefixes[k..].iter().map(|&x| precision(x)).fold(0.0, f64::max);
                total += env / num_gt as f64;
            }
        }
        Some(total)
    }
}

#[derive(Debug, Clone)]
pub struct OracleDet {
    pub image: String,
    pub class: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct OracleGt {
    pub image: String,
    pub class: String,
    pub difficult: bool,
}

/// A small random evaluation problem over two images.
#[derive(Debug, Clone)]
pub struct MicroInstance {
    pub dets: Vec<(OracleDet, Box5)>,
    pub gts: Vec<(OracleGt, Box5)>,
}

const MICRO_IMAGES: [&str; 2] = ["img0", "img1"];
const MICRO_CLASSES: [&str; 3] = ["plane", "ship", "tank"];

/// Up to 6 detections, 4 ground truths and 3 classes. Detections mostly sit
/// on or near a ground truth; scores come from a 5-level grid so ties occur.
pub fn micro_instance(rng: &mut StdRng) -> MicroInstance {
    let n_classes = rng.random_range(1..=3);
    let n_gt = rng.random_range(0..=4);
    let n_det = rng.random_range(0..=6);
    let class = |rng: &mut StdRng| MICRO_CLASSES[rng.random_range(0..n_classes)].to_string();
    let image = |rng: &mut StdRng| MICRO_IMAGES[rng.random_range(0..2)].to_string();
    let gts: Vec<(OracleGt, Box5)> = (0..n_gt)
        .map(|_| {
            let b = random_box(rng, 30.0, 4.0, 20.0);
            (OracleGt { image: image(rng), class: class(rng), difficult: rng.random_bool(0.25) }, b)
        })
        .collect();
    let dets = (0..n_det)
        .map(|_| {
            let score = rng.random_range(1..=5) as f64 / 5.0;
            if !gts.is_empty() && rng.random_bool(0.75) {
                let (g, b) = &gts[rng.random_range(0..gts.len())];
                let c = if rng.random_bool(0.85) { g.class.clone() } else { class(rng) };
                let b = if rng.random_bool(0.3) { *b } else { nearby_box(rng, *b) };
                (OracleDet { image: g.image.clone(), class: c, score }, b)
            } else {
                (OracleDet { image: image(rng), class: class(rng), score }, random_box(rng, 30.0, 4.0, 20.0))
            }
        })
        .collect();
    MicroInstance { dets, gts }
}

/// DOTA-format text for `n` random rectangles inside `[0, 4000]²`.
pub fn synthetic_dota(rng: &mut StdRng, n: usize, min_side: f64, max_side: f64) -> String {
    (0..n)
        .map(|i| {
            let b = random_box(rng, 1800.0, min_side, max_side);
            let c = corners([b[0] + 2000.0, b[1] + 2000.0, b[2], b[3], b[4]]);
            let coords: Vec<String> = c.iter().flat_map(|p| [format!("{:.3}", p.0), format!("{:.3}", p.1)]).collect();
            format!("{} {} 0\n", coords.join(" "), MICRO_CLASSES[i % 3])
        })
        .collect()
}

/// End-to-end mAP: brute-force matching per (image, class), pooled ranking by
/// score (ties by detection index), [`brute_ap`] per class, mean over classes
/// with non-difficult ground truth. `iou(d, g)` indexes the input slices.
pub fn brute_evaluate(
    dets: &[OracleDet],
    gts: &[OracleGt],
    iou: &dyn Fn(usize, usize) -> f64,
    thr: f64,
    eleven_point: bool,
) -> (BTreeMap<String, Option<f64>>, f64) {
    let classes: BTreeSet<&str> = dets.iter().map(|d| d.class.as_str()).chain(gts.iter().map(|g| g.class.as_str())).collect();
    let images: BTreeSet<&str> = dets.iter().map(|d| d.image.as_str()).chain(gts.iter().map(|g| g.image.as_str())).collect();
    let mut per_class = BTreeMap::new();
    for &class in &classes {
        let mut outcomes: Vec<(usize, Outcome)> = Vec::new();
        for &image in &images {
            let di: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class == class && dets[i].image == image).collect();
            let gi: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].class == class && gts[i].image == image).collect();
            let scores: Vec<f64> = di.iter().map(|&i| dets[i].score).collect();
            let difficult: Vec<bool> = gi.iter().map(|&i| gts[i].difficult).collect();
            let matrix: Vec<Vec<f64>> = di.iter().map(|&d| gi.iter().map(|&g| iou(d, g)).collect()).collect();
            let res = brute_force_match(&scores, &difficult, &matrix, thr);
            outcomes.extend(di.iter().copied().zip(res));
        }
        outcomes.retain(|(_, o)| *o != Outcome::Ignored);
        outcomes.sort_by(|a, b| dets[b.0].score.partial_cmp(&dets[a.0].score).unwrap().then(a.0.cmp(&b.0)));
        let flags: Vec<bool> = outcomes.iter().map(|(_, o)| *o == Outcome::TruePositive).collect();
        let num_gt = gts.iter().filter(|g| g.class == class && !g.difficult).count();
        per_class.insert(class.to_string(), brute_ap(&flags, num_gt, eleven_point));
    }
    let scored: Vec<f64> = per_class.values().filter_map(|v| *v).collect();
    let map = if scored.is_empty() { 0.0 } else { scored.iter().sum::<f64>() / scored.len() as f64 };
    (per_class, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracles_agree_on_known_values() {
        let a = [0.0, 0.0, 4.0, 4.0, 0.0];
        let b = [2.0, 0.0, 4.0, 4.0, 0.0];
        assert!((scanline_box_iou(a, b, 1000) - 1.0 / 3.0).abs() < 1e-9);
        assert!((pixel_iou(&corners(a), &corners(b), 600) - 1.0 / 3.0).abs() < 1e-2);
        let diamond = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (1.0, -1.0)];
        assert!((min_rect_area_by_sweep(&diamond) - 2.0).abs() < 1e-9);
        assert!((brute_ap(&[true, false, true, false], 2, true).unwrap() - (6.0 + 5.0 * 2.0 / 3.0) / 11.0).abs() < 1e-12);
    }
}
