//! Self-organizing maps.
//!
//! Two flavours live here. [`classic_som_fit`] is the textbook Kohonen map fitted to
//! a point cloud. The rest of the module treats a segmentation [`BeliefMap`] itself
//! as the lattice of nodes and relaxes it by gradient descent on the neighborhood
//! energy
//!
//! ```text
//! E = Σ_i 1/5 · Σ_{a,b ∈ S_i} ½ ‖v_a − v_b‖²
//! ```
//!
//! where `S_i` is pixel `i` together with the neighbors it is still connected to in
//! the [`ComponentGraph`]. Messages never cross a dropped edge, so beliefs only mix
//! within a connected component.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{BeliefMap, ComponentGraph, Direction, Grid};
use crate::rng;
use crate::trajectory::RunTrajectory;

/// Fixed size of a full lattice neighborhood (the node plus four neighbors).
const NEIGHBORHOOD: f64 = 5.0;

/// An `side × side` lattice of `dim`-dimensional nodes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SomLattice {
    side: usize,
    dim: usize,
    nodes: Vec<f64>,
}

impl SomLattice {
    pub fn new(side: usize, dim: usize, nodes: Vec<f64>) -> Result<Self> {
        if side == 0 || dim == 0 {
            return Err(Error::invalid("lattice side and dimension must be positive"));
        }
        if nodes.len() != side * side * dim {
            return Err(Error::mismatch("node buffer does not match side*side*dim"));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("lattice nodes must be finite"));
        }
        Ok(SomLattice { side, dim, nodes })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, index: usize) -> &[f64] {
        &self.nodes[index * self.dim..(index + 1) * self.dim]
    }

    pub fn node_count(&self) -> usize {
        self.side * self.side
    }

    fn grid(&self) -> Grid {
        Grid::new(self.side, self.side)
    }

    /// Best-matching node for `point`; ties go to the lowest index.
    pub fn best_matching(&self, point: &[f64]) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for n in 0..self.node_count() {
            let d = squared_distance(self.node(n), point);
            if d < best_dist {
                best = n;
                best_dist = d;
            }
        }
        best
    }

    /// Pulls the best-matching node for `x` and its lattice neighbors toward `x`.
    pub fn train_step(&mut self, x: &[f64], alpha: f64) {
        let dim = self.dim;
        let bmu = self.best_matching(x);
        let hood: Vec<usize> = self.neighborhood(bmu).collect();
        for n in hood {
            for (v, &xk) in self.nodes[n * dim..(n + 1) * dim].iter_mut().zip(x) {
                *v += alpha * (xk - *v);
            }
        }
    }

    /// The node and its lattice 4-neighbors.
    fn neighborhood(&self, index: usize) -> impl Iterator<Item = usize> {
        let grid = self.grid();
        std::iter::once(index).chain(Direction::ALL.into_iter().filter_map(move |d| grid.step(index, d)))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map(Vec::len).ok_or_else(|| Error::invalid("point set is empty"))?;
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::mismatch("points must share one positive dimension"));
    }
    Ok(dim)
}

/// Fits a Kohonen map to `points`.
///
/// Nodes start uniformly at random inside the points' bounding box. Each iteration
/// draws a point, finds its best-matching node and pulls that node and its lattice
/// neighbors toward the point by `alpha`.
pub fn classic_som_fit(points: &[Vec<f64>], side: usize, alpha: f64, iters: usize, seed: u64) -> Result<SomLattice> {
    let dim = check_points(points)?;
    if side == 0 {
        return Err(Error::invalid("lattice side must be positive"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let mut rng = rng::stream(seed, &[]);
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for (k, &x) in p.iter().enumerate() {
            lo[k] = lo[k].min(x);
            hi[k] = hi[k].max(x);
        }
    }
    let mut nodes = Vec::with_capacity(side * side * dim);
    for _ in 0..side * side {
        for k in 0..dim {
            nodes.push(if hi[k] > lo[k] { rng.random_range(lo[k]..=hi[k]) } else { lo[k] });
        }
    }
    let mut lattice = SomLattice::new(side, dim, nodes)?;

    for _ in 0..iters {
        let x = &points[rng.random_range(0..points.len())];
        lattice.train_step(x, alpha);
    }
    Ok(lattice)
}

/// Unnormalized map energy: for every point, a fifth of the squared distances from
/// the point to its best-matching node and that node's lattice neighbors.
pub fn classic_som_energy_sum(lattice: &SomLattice, points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let dim = check_points(points)?;
    if dim != lattice.dim {
        return Err(Error::mismatch(format!("points have dimension {dim}, lattice {}", lattice.dim)));
    }
    let mut total = 0.0;
    for y in points {
        let bmu = lattice.best_matching(y);
        let local: f64 = lattice.neighborhood(bmu).map(|n| squared_distance(lattice.node(n), y)).sum();
        total += local / NEIGHBORHOOD;
    }
    Ok(total)
}

/// Map energy averaged over the points.
pub fn classic_som_energy(lattice: &SomLattice, points: &[Vec<f64>]) -> Result<f64> {
    let sum = classic_som_energy_sum(lattice, points)?;
    Ok(if points.is_empty() { 0.0 } else { sum / points.len() as f64 })
}

/// Sum of ½(v[a] − v[b])² over all ordered component pairs.
///
/// Zero for a flat vector and large for a peaked one.
pub fn neuron_response(v: &[f64]) -> f64 {
    let mut r = 0.0;
    for a in 0..v.len() {
        for b in a + 1..v.len() {
            let d = v[a] - v[b];
            r += d * d;
        }
    }
    r
}

/// Which update rule a step applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SomMode {
    /// Average of the messages from connected neighbors.
    #[default]
    Uniform,
    /// Messages weighted by a softmax over neuron responses.
    Response,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SomStepConfig {
    pub alpha: f64,
    pub mode: SomMode,
    /// Let dropped edges take part in the response softmax with weight `exp(0)`.
    pub include_disconnected: bool,
}

impl Default for SomStepConfig {
    fn default() -> Self {
        SomStepConfig { alpha: 0.1, mode: SomMode::Uniform, include_disconnected: false }
    }
}

impl SomStepConfig {
    pub fn new(alpha: f64, mode: SomMode) -> Result<Self> {
        let cfg = SomStepConfig { alpha, mode, include_disconnected: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

fn pair_sum(vectors: &[&[f64]]) -> f64 {
    let mut s = 0.0;
    for a in 0..vectors.len() {
        for b in a + 1..vectors.len() {
            s += squared_distance(vectors[a], vectors[b]);
        }
    }
    s
}

/// Energy term of the neighborhood centred on pixel `index`.
pub fn som_neighborhood_energy(map: &BeliefMap, graph: &ComponentGraph, index: usize) -> f64 {
    let mut hood: Vec<&[f64]> = Vec::with_capacity(5);
    hood.push(map.pixel(index));
    hood.extend(graph.kept_neighbors(index).map(|j| map.pixel(j)));
    pair_sum(&hood) / NEIGHBORHOOD
}

/// Total neighborhood energy of a belief map under the gated lattice.
pub fn som_energy(map: &BeliefMap, graph: &ComponentGraph) -> Result<f64> {
    map.check_grid(graph.grid(), "component graph")?;
    Ok((0..map.grid().len()).map(|i| som_neighborhood_energy(map, graph, i)).sum())
}

/// One synchronous sweep of the uniformly averaged update.
///
/// Every node moves by `alpha / (1 + deg)` times the summed differences to its
/// connected neighbors, the `1` counting the node's own (zero) message.
pub fn som_step_uniform(map: &BeliefMap, graph: &ComponentGraph, cfg: &SomStepConfig) -> Result<BeliefMap> {
    map.check_grid(graph.grid(), "component graph")?;
    let classes = map.classes();
    let mut out = map.clone();
    let mut acc = vec![0.0; classes];
    for j in 0..map.grid().len() {
        let vj = map.pixel(j);
        acc.fill(0.0);
        let mut norm = 1usize;
        for i in graph.kept_neighbors(j) {
            for ((a, &vi), &vjc) in acc.iter_mut().zip(map.pixel(i)).zip(vj) {
                *a += vi - vjc;
            }
            norm += 1;
        }
        if norm == 1 {
            continue;
        }
        let scale = cfg.alpha / norm as f64;
        for (o, &a) in out.pixel_mut(j).iter_mut().zip(&acc) {
            *o += scale * a;
        }
    }
    Ok(out)
}

/// One synchronous sweep of the response-weighted update.
///
/// Node `j` moves toward neighbor `i` with weight
/// `exp(r_i) / (exp(r_j) + Σ_k exp(r_k))`, responses taken from the pre-sweep map.
/// By default only connected neighbors enter the sums; with
/// `include_disconnected` a dropped edge contributes `exp(0)` to both numerator
/// and normalizer.
pub fn som_step_response(map: &BeliefMap, graph: &ComponentGraph, cfg: &SomStepConfig) -> Result<BeliefMap> {
    map.check_grid(graph.grid(), "component graph")?;
    let grid = map.grid();
    let responses: Vec<f64> = (0..grid.len()).map(|i| neuron_response(map.pixel(i))).collect();
    let mut out = map.clone();
    let mut terms: Vec<(usize, f64)> = Vec::with_capacity(4);
    for j in 0..grid.len() {
        terms.clear();
        for dir in Direction::ALL {
            let Some(i) = grid.step(j, dir) else { continue };
            if graph.kept(j, dir) {
                terms.push((i, responses[i]));
            } else if cfg.include_disconnected {
                terms.push((i, 0.0));
            }
        }
        if terms.is_empty() {
            continue;
        }
        let shift = terms.iter().fold(responses[j], |m, &(_, e)| m.max(e));
        let norm = (responses[j] - shift).exp() + terms.iter().map(|&(_, e)| (e - shift).exp()).sum::<f64>();
        let vj = map.pixel(j);
        let dst = out.pixel_mut(j);
        for &(i, e) in &terms {
            let weight = cfg.alpha * (e - shift).exp() / norm;
            for ((o, &vi), &vjc) in dst.iter_mut().zip(map.pixel(i)).zip(vj) {
                *o += weight * (vi - vjc);
            }
        }
    }
    Ok(out)
}

/// Applies whichever update `cfg.mode` selects.
pub fn som_step(map: &BeliefMap, graph: &ComponentGraph, cfg: &SomStepConfig) -> Result<BeliefMap> {
    match cfg.mode {
        SomMode::Uniform => som_step_uniform(map, graph, cfg),
        SomMode::Response => som_step_response(map, graph, cfg),
    }
}

/// Runs `iterations` sweeps, recording the energy before the first and after every sweep.
pub fn run_som(
    map: &BeliefMap,
    graph: &ComponentGraph,
    cfg: &SomStepConfig,
    iterations: usize,
    keep_snapshots: bool,
) -> Result<RunTrajectory> {
    cfg.validate()?;
    crate::trajectory::iterate(map, iterations, keep_snapshots, |m| som_step(m, graph, cfg), |m| som_energy(m, graph))
}
