//! Turning an intensity image into a point set: cardinality from the image
//! mass, positions from weighted k-means over pixel centers.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::raster::IntensityImage;
use crate::rng::{self, Purpose, NO_STEP};

/// Estimated target positions at one step, meters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateSet {
    pub positions: Vec<Vec2>,
    pub time_step: u32,
}

const MAX_ITERATIONS: usize = 100;

/// `round(Σ max(pixel, 0)·ρ²)` over the first channel.
pub fn estimate_cardinality(image: &IntensityImage) -> usize {
    let sum: f64 = image.channel(0).iter().map(|&v| (v as f64).max(0.0)).sum();
    let mass = sum * image.grid.pixel_area();
    libm::round(mass).max(0.0) as usize
}

/// Weighted k-means over the centers of positive pixels of the first channel.
///
/// With fewer positive pixels than `k`, every positive pixel center is
/// returned and the rest are copies of the global weighted centroid (the grid
/// center when the image has no positive pixel).
pub fn extract_targets(image: &IntensityImage, k: usize, seed: u64) -> EstimateSet {
    let grid = image.grid;
    let n = grid.width_pixels;
    let ch = image.channel(0);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = ch[i * n + j] as f64;
            if v > 0.0 {
                points.push(grid.center(i, j));
                weights.push(v);
            }
        }
    }
    let fallback = grid.center(0, 0) + Vec2::new(0.5, 0.5) * ((n as f64 - 1.0) * grid.resolution);
    EstimateSet {
        positions: weighted_kmeans(&points, &weights, k, seed, grid.resolution, fallback),
        time_step: 0,
    }
}

/// Weighted k-means++ initialization followed by Lloyd iterations until the
/// largest center move falls below `1e-6·scale` or 100 iterations pass.
///
/// Points are put in a canonical order first, so the result does not depend
/// on the order they are given in. `fallback` pads the output when there are
/// no points at all.
pub fn weighted_kmeans(points: &[Vec2], weights: &[f64], k: usize, seed: u64, scale: f64, fallback: Vec2) -> Vec<Vec2> {
    assert_eq!(points.len(), weights.len());
    if k == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
            .then(weights[a].total_cmp(&weights[b]))
    });
    let pts: Vec<Vec2> = order.iter().map(|&i| points[i]).collect();
    let w: Vec<f64> = order.iter().map(|&i| weights[i]).collect();

    if pts.len() <= k {
        let total: f64 = w.iter().sum();
        let centroid = if total > 0.0 {
            weighted_mean(&pts, &w)
        } else {
            fallback
        };
        let mut out = pts.clone();
        out.resize(k, centroid);
        return out;
    }

    let mut rng = rng::stream(seed, 0, NO_STEP, Purpose::Extraction);
    let mut centers = init_plus_plus(&pts, &w, k, &mut rng);
    let mut labels = vec![0usize; pts.len()];
    let tolerance = 1e-6 * scale;
    for _ in 0..MAX_ITERATIONS {
        let index = BucketIndex::new(&centers);
        for (l, p) in labels.iter_mut().zip(&pts) {
            *l = index.nearest(*p, &centers);
        }
        let mut sx = vec![0.0f64; k];
        let mut sy = vec![0.0f64; k];
        let mut sw = vec![0.0f64; k];
        for ((p, &wi), &l) in pts.iter().zip(&w).zip(&labels) {
            sx[l] += wi * p.x;
            sy[l] += wi * p.y;
            sw[l] += wi;
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if sw[c] > 0.0 {
                let next = Vec2::new(sx[c] / sw[c], sy[c] / sw[c]);
                shift = shift.max(next.distance(centers[c]));
                centers[c] = next;
            }
        }
        if shift < tolerance {
            break;
        }
    }
    centers
}

fn weighted_mean(points: &[Vec2], weights: &[f64]) -> Vec2 {
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for (p, &w) in points.iter().zip(weights) {
        sx += w * p.x;
        sy += w * p.y;
        sw += w;
    }
    Vec2::new(sx / sw, sy / sw)
}

/// Index drawn with probability proportional to `mass`.
fn draw<R: Rng>(mass: &[f64], rng: &mut R) -> usize {
    let total: f64 = mass.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &m) in mass.iter().enumerate() {
        acc += m;
        if acc > target && m > 0.0 {
            return i;
        }
    }
    mass.iter().rposition(|&m| m > 0.0).unwrap_or(0)
}

fn init_plus_plus<R: Rng>(pts: &[Vec2], w: &[f64], k: usize, rng: &mut R) -> Vec<Vec2> {
    let mut centers = Vec::with_capacity(k);
    centers.push(pts[draw(w, rng)]);
    let mut d2: Vec<f64> = pts.iter().map(|p| (*p - centers[0]).norm_sq()).collect();
    while centers.len() < k {
        let mass: Vec<f64> = d2.iter().zip(w).map(|(d, w)| d * w).collect();
        let next = if mass.iter().any(|&m| m > 0.0) {
            pts[draw(&mass, rng)]
        } else {
            // All mass sits on existing centers.
            pts[draw(w, rng)]
        };
        for (d, p) in d2.iter_mut().zip(pts) {
            *d = d.min((*p - next).norm_sq());
        }
        centers.push(next);
    }
    centers
}

/// Uniform bucket grid over the center bounding box for exact nearest-center
/// queries. Ties go to the lowest center index, as in a linear scan.
struct BucketIndex {
    lo: Vec2,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl BucketIndex {
    fn new(centers: &[Vec2]) -> Self {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in centers {
            lo = Vec2::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = Vec2::new(hi.x.max(c.x), hi.y.max(c.y));
        }
        let side = libm::ceil(libm::sqrt(centers.len() as f64)).max(1.0);
        let span = (hi.x - lo.x).max(hi.y - lo.y);
        let cell = if span > 0.0 { span / side } else { 1.0 };
        let cols = ((hi.x - lo.x) / cell) as usize + 1;
        let rows = ((hi.y - lo.y) / cell) as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (idx, c) in centers.iter().enumerate() {
            let (bx, by) = Self::cell_of(lo, cell, cols, rows, *c);
            buckets[bx * rows + by].push(idx);
        }
        BucketIndex {
            lo,
            cell,
            cols,
            rows,
            buckets,
        }
    }

    fn cell_of(lo: Vec2, cell: f64, cols: usize, rows: usize, p: Vec2) -> (usize, usize) {
        let fx = ((p.x - lo.x) / cell).max(0.0);
        let fy = ((p.y - lo.y) / cell).max(0.0);
        ((fx as usize).min(cols - 1), (fy as usize).min(rows - 1))
    }

    fn nearest(&self, p: Vec2, centers: &[Vec2]) -> usize {
        let (cx, cy) = Self::cell_of(self.lo, self.cell, self.cols, self.rows, p);
        let mut best = (f64::INFINITY, usize::MAX);
        let max_ring = self.cols.max(self.rows);
        for r in 0..=max_ring {
            let x0 = cx as isize - r as isize;
            let x1 = cx as isize + r as isize;
            let y0 = cy as isize - r as isize;
            let y1 = cy as isize + r as isize;
            for bx in x0.max(0)..=x1.min(self.cols as isize - 1) {
                for by in y0.max(0)..=y1.min(self.rows as isize - 1) {
                    let on_ring = bx == x0 || bx == x1 || by == y0 || by == y1;
                    if !on_ring {
                        continue;
                    }
                    for &idx in &self.buckets[bx as usize * self.rows + by as usize] {
                        let d = (p - centers[idx]).norm_sq();
                        if d < best.0 || (d == best.0 && idx < best.1) {
                            best = (d, idx);
                        }
                    }
                }
            }
            // Cells in ring r+1 or beyond are at least r·cell away. The strict
            // inequality keeps lowest-index tie breaking exact.
            let bound = r as f64 * self.cell;
            if best.1 != usize::MAX && best.0 < bound * bound {
                break;
            }
        }
        best.1
    }
}
