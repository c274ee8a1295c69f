//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use lattice_relax::rng::{self, StreamRng};
use lattice_relax::{BeliefMap, ComponentGraph, Grid};
use rand::Rng;

pub fn rng(seed: u64) -> StreamRng {
    rng::stream(seed, &[0xC0FFEE])
}

pub fn random_map(h: usize, w: usize, l: usize, rng: &mut StreamRng) -> BeliefMap {
    let data = (0..h * w * l).map(|_| rng.random_range(-1.0..1.0)).collect();
    BeliefMap::new(h, w, l, data).unwrap()
}

/// Each lattice edge kept with probability `p`.
pub fn random_graph(grid: Grid, p: f64, rng: &mut StreamRng) -> ComponentGraph {
    ComponentGraph::from_predicate(grid, |_, _| rng.random_bool(p))
}

/// Lattice neighbors of pixel `i` joined by a kept edge, by brute force over the
/// four offsets.
pub fn kept_neighbors(graph: &ComponentGraph, i: usize) -> Vec<usize> {
    let g = graph.grid();
    let (r, c) = g.coord(i);
    let mut out = Vec::new();
    for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
        if nr < 0 || nc < 0 || nr >= g.height as i64 || nc >= g.width as i64 {
            continue;
        }
        let j = g.index(nr as usize, nc as usize);
        if graph.kept_neighbors(i).any(|k| k == j) {
            out.push(j);
        }
    }
    out
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ ≤ rel · ‖b‖ + abs`.
pub fn close_rel(a: &[f64], b: &[f64], rel: f64, abs: f64) -> bool {
    let diff = sq_dist(a, b).sqrt();
    let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff <= rel * norm + abs
}

type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; counter-clockwise, no collinear points.
pub fn convex_hull(mut pts: Vec<Pt>) -> Vec<Pt> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Pt> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Pt> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Hull of the corners of every foreground pixel square.
pub fn mask_hull(mask: &[usize], width: usize) -> Vec<Pt> {
    let mut pts = Vec::new();
    for (i, &m) in mask.iter().enumerate() {
        if m != 0 {
            let (r, c) = ((i / width) as f64, (i % width) as f64);
            pts.extend([(c, r), (c + 1.0, r), (c, r + 1.0), (c + 1.0, r + 1.0)]);
        }
    }
    convex_hull(pts)
}

fn segment_distance(a: Pt, b: Pt, p: Pt) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Greedy min-max simplification of a closed ring.
///
/// Vertices are kept as indices into `ring`; dropping vertex `k` replaces its two
/// edges by one chord, whose error is the largest distance from the original
/// points it spans. The cheapest vertex is dropped while that error stays within
/// `tol`.
pub fn simplify_ring(ring: Vec<Pt>, tol: f64) -> Vec<Pt> {
    let n = ring.len();
    let mut keep: Vec<usize> = (0..n).collect();
    let span_error = |from: usize, to: usize| -> f64 {
        let mut worst: f64 = 0.0;
        let mut i = (from + 1) % n;
        while i != to {
            worst = worst.max(segment_distance(ring[from], ring[to], ring[i]));
            i = (i + 1) % n;
        }
        worst
    };
    while keep.len() > 3 {
        let m = keep.len();
        let (k, err) = (0..m)
            .map(|k| (k, span_error(keep[(k + m - 1) % m], keep[(k + 1) % m])))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if err > tol {
            break;
        }
        keep.remove(k);
    }
    keep.into_iter().map(|i| ring[i]).collect()
}

/// Hull of the centres of the foreground pixels.
pub fn centre_hull(mask: &[usize], width: usize) -> Vec<Pt> {
    let pts = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m != 0)
        .map(|(i, _)| ((i % width) as f64 + 0.5, (i / width) as f64 + 0.5))
        .collect();
    convex_hull(pts)
}

pub fn hull_area_perimeter(ring: &[Pt]) -> (f64, f64) {
    let n = ring.len();
    let mut area = 0.0;
    let mut perim = 0.0;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        area += a.0 * b.1 - b.0 * a.1;
        perim += ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    }
    (area.abs() / 2.0, perim)
}

/// Self-organizing energy of the neighborhood centred on `i`: a fifth of the
/// ordered-pair sum of `½‖v_a − v_b‖²` over `i` and its kept neighbors.
pub fn som_term(map: &BeliefMap, graph: &ComponentGraph, i: usize) -> f64 {
    let mut set = vec![i];
    set.extend(kept_neighbors(graph, i));
    let mut e = 0.0;
    for &a in &set {
        for &b in &set {
            if a != b {
                e += 0.5 * sq_dist(map.pixel(a), map.pixel(b));
            }
        }
    }
    e / 5.0
}

pub fn som_total(map: &BeliefMap, graph: &ComponentGraph) -> f64 {
    (0..map.grid().len()).map(|i| som_term(map, graph, i)).sum()
}

/// Pair affinity: mean over channels of the normalized `exp(−(a_c − b_c)²)`.
pub fn affinity(a: &[f64], b: &[f64]) -> f64 {
    let k: Vec<f64> = a.iter().zip(b).map(|(x, y)| (-(x - y) * (x - y)).exp()).collect();
    let z: f64 = k.iter().sum();
    k.iter().map(|v| v / z).sum::<f64>() / k.len() as f64
}

/// `−½ Σ_i Σ_{j kept} s(i,j) v_iᵀ w v_j` with `w` given row-major.
pub fn crf_total(map: &BeliefMap, image: &lattice_relax::Image, w: &[f64], graph: &ComponentGraph) -> f64 {
    let l = map.classes();
    let mut e = 0.0;
    for i in 0..map.grid().len() {
        for j in kept_neighbors(graph, i) {
            let (vi, vj) = (map.pixel(i), map.pixel(j));
            let mut form = 0.0;
            for r in 0..l {
                for c in 0..l {
                    form += vi[r] * w[r * l + c] * vj[c];
                }
            }
            e += affinity(image.pixel(i), image.pixel(j)) * form;
        }
    }
    -0.5 * e
}

/// `−(1/β) ln Σ_m exp(β ⟨ξ_m, v⟩) + ½ ‖v‖²`.
pub fn hopfield_total(v: &[f64], memories: &[Vec<f64>], beta: f64) -> f64 {
    let z: f64 = memories.iter().map(|m| (beta * m.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()).exp()).sum();
    -z.ln() / beta + 0.5 * v.iter().map(|x| x * x).sum::<f64>()
}

/// Orthonormal rows by Gram–Schmidt on Gaussian draws.
pub fn orthonormal(count: usize, dim: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let normal = rand_distr::StandardNormal;
    let mut out: Vec<Vec<f64>> = Vec::new();
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(normal)).collect();
        for u in &out {
            let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}
