//! Pairwise conditional-random-field refinement.
//!
//! The energy couples each pixel to its lattice neighbors through a label
//! compatibility matrix `w` and a pixel-pair affinity `s(i, j)`:
//!
//! ```text
//! E = −½ Σ_i Σ_{j ∈ N(i)} s(i, j) · v_iᵀ w v_j
//! ```
//!
//! The ½ makes every unordered pair count once, so for symmetric `w` the update
//! `v_i ← v_i + α Σ_j s(i, j) · w v_j` is exactly a gradient step on `E`.
//! The affinity is the mean of the Gaussian feature kernel [`gaussian_kernel`].

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{BeliefMap, ComponentGraph, Direction, Image};
use crate::trajectory::{self, RunTrajectory};

/// `L × L` label compatibility matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityWeights {
    classes: usize,
    matrix: Vec<f64>,
}

impl CompatibilityWeights {
    pub fn new(classes: usize, matrix: Vec<f64>) -> Result<Self> {
        if classes == 0 || matrix.len() != classes * classes {
            return Err(Error::mismatch(format!(
                "compatibility matrix needs {classes}x{classes} entries, got {}",
                matrix.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("compatibility weights must be finite"));
        }
        Ok(CompatibilityWeights { classes, matrix })
    }

    pub fn identity(classes: usize) -> Self {
        let mut matrix = vec![0.0; classes * classes];
        for c in 0..classes {
            matrix[c * classes + c] = 1.0;
        }
        CompatibilityWeights { classes, matrix }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::mismatch("compatibility matrix must be square"));
        }
        CompatibilityWeights::new(n, rows.concat())
    }

    /// Parses whitespace-separated rows, one matrix row per non-empty line.
    pub fn parse(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|tok| tok.parse::<f64>().map_err(|e| Error::Format(format!("bad weight {tok:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        CompatibilityWeights::from_rows(&rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CompatibilityWeights::parse(&fs::read_to_string(path)?)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.classes + col]
    }

    /// `out = w · v`.
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.matrix[r * self.classes..(r + 1) * self.classes].iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for (r, &ar) in a.iter().enumerate() {
            let row = &self.matrix[r * self.classes..(r + 1) * self.classes];
            s += ar * row.iter().zip(b).map(|(w, x)| w * x).sum::<f64>();
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfConfig {
    pub alpha: f64,
    /// Softmax each updated vector back onto the simplex.
    pub project_simplex: bool,
    pub iterations: usize,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig { alpha: 0.1, project_simplex: false, iterations: 60 }
    }
}

impl CrfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Softmax of `exp(−(a_c − b_c)²)` over feature channels.
pub fn gaussian_kernel(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::mismatch(format!("feature vectors have lengths {} and {}", a.len(), b.len())));
    }
    let sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
    let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let mut k: Vec<f64> = sq.iter().map(|d| (min - d).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

/// Scalar affinity of a pixel pair: the mean of the kernel vector.
pub fn pair_affinity(a: &[f64], b: &[f64]) -> Result<f64> {
    let k = gaussian_kernel(a, b)?;
    Ok(k.iter().sum::<f64>() / k.len() as f64)
}

/// Precomputed pair affinities along the kept edges of a graph, plus the weights.
#[derive(Debug, Clone)]
pub struct CrfModel {
    affinity: Vec<[f64; 4]>,
    graph: ComponentGraph,
    weights: CompatibilityWeights,
}

impl CrfModel {
    pub fn new(image: &Image, weights: CompatibilityWeights, graph: &ComponentGraph) -> Result<Self> {
        if image.grid() != graph.grid() {
            return Err(Error::mismatch("image and component graph differ in size"));
        }
        let mut affinity = vec![[0.0; 4]; graph.grid().len()];
        for (i, slots) in affinity.iter_mut().enumerate() {
            for dir in Direction::ALL {
                if let Some(j) = graph.kept_neighbor(i, dir) {
                    slots[dir.slot()] = pair_affinity(image.pixel(i), image.pixel(j))?;
                }
            }
        }
        Ok(CrfModel { affinity, graph: graph.clone(), weights })
    }

    fn check(&self, map: &BeliefMap) -> Result<()> {
        map.check_grid(self.graph.grid(), "CRF lattice")?;
        if map.classes() != self.weights.classes() {
            return Err(Error::mismatch(format!(
                "belief map has {} classes, weights {}",
                map.classes(),
                self.weights.classes()
            )));
        }
        Ok(())
    }

    pub fn energy(&self, map: &BeliefMap) -> Result<f64> {
        self.check(map)?;
        let mut e = 0.0;
        for i in 0..map.grid().len() {
            for dir in Direction::ALL {
                if let Some(j) = self.graph.kept_neighbor(i, dir) {
                    e += self.affinity[i][dir.slot()] * self.weights.bilinear(map.pixel(i), map.pixel(j));
                }
            }
        }
        Ok(-0.5 * e)
    }

    pub fn step(&self, map: &BeliefMap, cfg: &CrfConfig) -> Result<BeliefMap> {
        self.check(map)?;
        cfg.validate()?;
        let classes = map.classes();
        let mut out = map.clone();
        let mut pooled = vec![0.0; classes];
        let mut message = vec![0.0; classes];
        for i in 0..map.grid().len() {
            pooled.fill(0.0);
            let mut any = false;
            for dir in Direction::ALL {
                if let Some(j) = self.graph.kept_neighbor(i, dir) {
                    let s = self.affinity[i][dir.slot()];
                    for (p, &vj) in pooled.iter_mut().zip(map.pixel(j)) {
                        *p += s * vj;
                    }
                    any = true;
                }
            }
            if any {
                self.weights.apply_into(&pooled, &mut message);
                for (o, &m) in out.pixel_mut(i).iter_mut().zip(&message) {
                    *o += cfg.alpha * m;
                }
            }
            if cfg.project_simplex {
                softmax_in_place(out.pixel_mut(i));
            }
        }
        out.set_simplex_unchecked(cfg.project_simplex);
        Ok(out)
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

pub fn crf_energy(map: &BeliefMap, image: &Image, w: &CompatibilityWeights, graph: &ComponentGraph) -> Result<f64> {
    CrfModel::new(image, w.clone(), graph)?.energy(map)
}

/// One synchronous CRF sweep over the kept edges of `graph`.
pub fn crf_step(
    map: &BeliefMap,
    image: &Image,
    w: &CompatibilityWeights,
    graph: &ComponentGraph,
    cfg: &CrfConfig,
) -> Result<BeliefMap> {
    CrfModel::new(image, w.clone(), graph)?.step(map, cfg)
}

/// `cfg.iterations` sweeps with the energy recorded before and after each.
pub fn run_crf(
    map: &BeliefMap,
    image: &Image,
    w: &CompatibilityWeights,
    graph: &ComponentGraph,
    cfg: &CrfConfig,
    keep_snapshots: bool,
) -> Result<RunTrajectory> {
    let model = CrfModel::new(image, w.clone(), graph)?;
    trajectory::iterate(map, cfg.iterations, keep_snapshots, |m| model.step(m, cfg), |m| model.energy(m))
}
