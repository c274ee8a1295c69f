//! Modern Hopfield retrieval over belief-map patches.
//!
//! The belief map is cut into non-overlapping `P × P` patches; each flattened patch
//! (a token of length `I0 = P·P·L`) evolves independently under
//!
//! ```text
//! E(v) = −(1/β) · log Σ_m exp(β ⟨ξ_m, v⟩) + ½ vᵀv
//! v ← v + α (ξᵀ softmax(β ξ v) − v)
//! ```
//!
//! which is gradient descent on `E` with step `α`. Memories `ξ` are k-means
//! centroids of training tokens.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::BeliefMap;
use crate::rng;
use crate::trajectory::RunTrajectory;

const MAGIC: &[u8; 4] = b"HOPF";
const FORMAT_VERSION: u32 = 1;
const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

/// Non-overlapping patches of a (zero-padded) belief map.
///
/// Tokens are stored back to back in patch-grid row-major order; inside a token
/// values are ordered by row, then column, then class.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    patch: usize,
    rows: usize,
    cols: usize,
    classes: usize,
    tokens: Vec<f64>,
}

impl PatchSet {
    pub fn patch(&self) -> usize {
        self.patch
    }

    /// Patch-grid shape `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn token_dim(&self) -> usize {
        self.patch * self.patch * self.classes
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn token(&self, index: usize) -> &[f64] {
        let d = self.token_dim();
        &self.tokens[index * d..(index + 1) * d]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f64]> {
        self.tokens.chunks_exact(self.token_dim())
    }

    fn check_bank(&self, bank: &MemoryBank) -> Result<()> {
        if bank.dim() != self.token_dim() {
            return Err(Error::mismatch(format!("tokens have length {}, memories {}", self.token_dim(), bank.dim())));
        }
        Ok(())
    }

    /// Sum of the per-token energies.
    pub fn energy(&self, bank: &MemoryBank) -> Result<f64> {
        self.check_bank(bank)?;
        let mut scores = Vec::new();
        Ok(self.tokens().map(|t| bank.energy_with(t, &mut scores)).sum())
    }

    /// One retrieval step applied to every token.
    pub fn step(&mut self, bank: &MemoryBank, alpha: f64) -> Result<()> {
        self.check_bank(bank)?;
        check_alpha(alpha)?;
        let d = self.token_dim();
        let mut scores = Vec::new();
        let mut retrieved = vec![0.0; d];
        for token in self.tokens.chunks_exact_mut(d) {
            bank.step_in_place(token, alpha, &mut scores, &mut retrieved);
        }
        Ok(())
    }
}

/// Splits `map` into `patch × patch` tokens, zero-padding the bottom and right edges.
pub fn patchify(map: &BeliefMap, patch: usize) -> Result<PatchSet> {
    if patch == 0 {
        return Err(Error::invalid("patch side must be positive"));
    }
    let (h, w, l) = (map.height(), map.width(), map.classes());
    let rows = h.div_ceil(patch);
    let cols = w.div_ceil(patch);
    let dim = patch * patch * l;
    let mut tokens = vec![0.0; rows * cols * dim];
    for (t, token) in tokens.chunks_exact_mut(dim).enumerate() {
        let (pr, pc) = (t / cols, t % cols);
        for dy in 0..patch {
            let y = pr * patch + dy;
            if y >= h {
                break;
            }
            for dx in 0..patch {
                let x = pc * patch + dx;
                if x >= w {
                    break;
                }
                let off = (dy * patch + dx) * l;
                token[off..off + l].copy_from_slice(map.pixel(y * w + x));
            }
        }
    }
    Ok(PatchSet { patch, rows, cols, classes: l, tokens })
}

/// Reassembles an `height × width` map from its patches, dropping the padding.
pub fn unpatchify(patches: &PatchSet, height: usize, width: usize) -> Result<BeliefMap> {
    let p = patches.patch;
    if height == 0 || width == 0 || patches.rows != height.div_ceil(p) || patches.cols != width.div_ceil(p) {
        return Err(Error::mismatch(format!(
            "{}x{} patch grid of side {p} does not cover a {height}x{width} map",
            patches.rows, patches.cols
        )));
    }
    let l = patches.classes;
    let mut data = vec![0.0; height * width * l];
    for y in 0..height {
        for x in 0..width {
            let token = patches.token((y / p) * patches.cols + x / p);
            let off = ((y % p) * p + x % p) * l;
            data[(y * width + x) * l..(y * width + x + 1) * l].copy_from_slice(&token[off..off + l]);
        }
    }
    BeliefMap::new(height, width, l, data)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// Stored memories `ξ` (one per row) and the inverse temperature `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    count: usize,
    dim: usize,
    beta: f64,
    memories: Vec<f64>,
}

impl MemoryBank {
    pub fn new(count: usize, dim: usize, beta: f64, memories: Vec<f64>) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(Error::invalid("memory bank needs at least one memory of positive length"));
        }
        if memories.len() != count * dim {
            return Err(Error::mismatch(format!("expected {count}x{dim} memory values, got {}", memories.len())));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if memories.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("memories must be finite"));
        }
        Ok(MemoryBank { count, dim, beta, memories })
    }

    pub fn from_rows(rows: &[Vec<f64>], beta: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::mismatch("memories differ in length"));
        }
        MemoryBank::new(rows.len(), dim, beta, rows.concat())
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn memory(&self, index: usize) -> &[f64] {
        &self.memories[index * self.dim..(index + 1) * self.dim]
    }

    /// `scores = β ξ v`; returns the maximum score.
    fn scores(&self, v: &[f64], scores: &mut Vec<f64>) -> f64 {
        scores.clear();
        let mut max = f64::NEG_INFINITY;
        for m in self.memories.chunks_exact(self.dim) {
            let s = self.beta * m.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            max = max.max(s);
            scores.push(s);
        }
        max
    }

    fn energy_with(&self, v: &[f64], scores: &mut Vec<f64>) -> f64 {
        let max = self.scores(v, scores);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        -lse / self.beta + 0.5 * v.iter().map(|x| x * x).sum::<f64>()
    }

    fn step_in_place(&self, v: &mut [f64], alpha: f64, scores: &mut Vec<f64>, retrieved: &mut [f64]) {
        let max = self.scores(v, scores);
        let mut total = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            total += *s;
        }
        retrieved.fill(0.0);
        for (m, &p) in self.memories.chunks_exact(self.dim).zip(scores.iter()) {
            let p = p / total;
            for (r, &x) in retrieved.iter_mut().zip(m) {
                *r += p * x;
            }
        }
        let keep = 1.0 - alpha;
        for (x, &r) in v.iter_mut().zip(retrieved.iter()) {
            *x = keep * *x + alpha * r;
        }
    }

    fn check_token(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::mismatch(format!("token has length {}, memories {}", v.len(), self.dim)));
        }
        Ok(())
    }

    /// Euclidean distance from `v` to its closest memory.
    pub fn nearest_distance(&self, v: &[f64]) -> Result<f64> {
        self.check_token(v)?;
        let best = self
            .memories
            .chunks_exact(self.dim)
            .map(|m| m.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        Ok(best.sqrt())
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let count = u32::try_from(self.count).map_err(|_| Error::invalid("too many memories"))?;
        let dim = u32::try_from(self.dim).map_err(|_| Error::invalid("memory dimension too large"))?;
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&count.to_le_bytes())?;
        out.write_all(&dim.to_le_bytes())?;
        out.write_all(&self.beta.to_le_bytes())?;
        for v in &self.memories {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a memory bank file (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported memory bank version {version}")));
        }
        input.read_exact(&mut word)?;
        let count = u32::from_le_bytes(word) as usize;
        input.read_exact(&mut word)?;
        let dim = u32::from_le_bytes(word) as usize;
        let mut dword = [0u8; 8];
        input.read_exact(&mut dword)?;
        let beta = f64::from_le_bytes(dword);
        let mut memories = Vec::with_capacity(count * dim);
        for _ in 0..count * dim {
            input.read_exact(&mut dword)?;
            memories.push(f64::from_le_bytes(dword));
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after memory bank".into()));
        }
        MemoryBank::new(count, dim, beta, memories)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        MemoryBank::read_from(BufReader::new(File::open(path)?))
    }
}

pub fn hopfield_energy(token: &[f64], bank: &MemoryBank) -> Result<f64> {
    bank.check_token(token)?;
    Ok(bank.energy_with(token, &mut Vec::new()))
}

pub fn hopfield_step(token: &[f64], bank: &MemoryBank, alpha: f64) -> Result<Vec<f64>> {
    bank.check_token(token)?;
    check_alpha(alpha)?;
    let mut v = token.to_vec();
    let mut retrieved = vec![0.0; bank.dim];
    bank.step_in_place(&mut v, alpha, &mut Vec::new(), &mut retrieved);
    Ok(v)
}

/// Learns `count` memories as k-means centroids of every token in `patches`.
///
/// Centroids start at distinct-valued tokens sampled with `seed` and are refined
/// by Lloyd iterations until no centroid moves more than 1e-6 (at most 100 rounds).
pub fn learn_memories(patches: &[PatchSet], count: usize, seed: u64) -> Result<MemoryBank> {
    let dim = patches.first().map(PatchSet::token_dim).ok_or_else(|| Error::invalid("no patch sets given"))?;
    if patches.iter().any(|p| p.token_dim() != dim) {
        return Err(Error::mismatch("patch sets differ in token length"));
    }
    if count == 0 {
        return Err(Error::invalid("memory count must be positive"));
    }
    let data: Vec<f64> = patches.iter().flat_map(|p| p.tokens.iter().copied()).collect();
    let n = data.len() / dim;
    if n < count {
        return Err(Error::invalid(format!("{n} tokens available, {count} memories requested")));
    }
    let token = |i: usize| &data[i * dim..(i + 1) * dim];

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[]));
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    for &i in &order {
        if chosen.len() == count {
            break;
        }
        if chosen.iter().all(|&c| token(c) != token(i)) {
            chosen.push(i);
        }
    }
    // Fewer distinct values than memories: fall back to repeated tokens.
    for &i in &order {
        if chosen.len() == count {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    let mut centroids: Vec<f64> = chosen.iter().flat_map(|&i| token(i).iter().copied()).collect();

    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        assignment.par_iter_mut().enumerate().for_each(|(i, a)| {
            let t = token(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cent) in centroids.chunks_exact(dim).enumerate() {
                let d: f64 = cent.iter().zip(t).map(|(x, y)| (x - y) * (x - y)).sum();
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            *a = best;
        });

        let mut sums = vec![0.0; count * dim];
        let mut sizes = vec![0usize; count];
        for (i, &c) in assignment.iter().enumerate() {
            sizes[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(token(i)) {
                *s += x;
            }
        }
        let mut moved: f64 = 0.0;
        for c in 0..count {
            if sizes[c] == 0 {
                continue;
            }
            let inv = 1.0 / sizes[c] as f64;
            let mut shift = 0.0;
            for (cent, &s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                let next = s * inv;
                shift += (next - *cent) * (next - *cent);
                *cent = next;
            }
            moved = moved.max(shift.sqrt());
        }
        if moved <= KMEANS_TOL {
            break;
        }
    }
    MemoryBank::new(count, dim, 1.0, centroids)
}

/// Mean distance from each token to its nearest memory.
pub fn reconstruction_error(bank: &MemoryBank, patches: &[PatchSet]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for set in patches {
        for t in set.tokens() {
            total += bank.nearest_distance(t)?;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// Patchifies, runs `iterations` retrieval steps per token and reassembles the map.
///
/// Energies are summed over tokens.
pub fn run_hopfield(
    map: &BeliefMap,
    bank: &MemoryBank,
    alpha: f64,
    iterations: usize,
    patch: usize,
    keep_snapshots: bool,
) -> Result<RunTrajectory> {
    check_alpha(alpha)?;
    let mut set = patchify(map, patch)?;
    let (h, w) = (map.height(), map.width());
    let mut energies = Vec::with_capacity(iterations + 1);
    let mut snapshots = keep_snapshots.then(|| vec![map.clone()]);
    energies.push(set.energy(bank)?);
    for _ in 0..iterations {
        set.step(bank, alpha)?;
        energies.push(set.energy(bank)?);
        if let Some(s) = snapshots.as_mut() {
            s.push(unpatchify(&set, h, w)?);
        }
    }
    let final_map = if iterations == 0 { map.clone() } else { unpatchify(&set, h, w)? };
    Ok(RunTrajectory { energies, snapshots, final_map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp(h: usize, w: usize, l: usize) -> BeliefMap {
        BeliefMap::new(h, w, l, (0..h * w * l).map(|i| i as f64 * 0.25 - 3.0).collect()).unwrap()
    }

    #[test]
    fn unit_patches_are_pixels() {
        let m = ramp(3, 2, 3);
        let set = patchify(&m, 1).unwrap();
        assert_eq!(set.len(), 6);
        for i in 0..6 {
            assert_eq!(set.token(i), m.pixel(i));
        }
    }

    #[test]
    fn patch_counts_and_layout() {
        let m = ramp(4, 4, 2);
        let set = patchify(&m, 2).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.token_dim(), 8);
        // Second token covers rows 0..2, columns 2..4.
        let expected: Vec<f64> = [2, 3, 6, 7].iter().flat_map(|&px| m.pixel(px).to_vec()).collect();
        assert_eq!(set.token(1), expected.as_slice());
    }

    #[test]
    fn round_trip_with_padding() {
        let m = ramp(5, 7, 2);
        let set = patchify(&m, 3).unwrap();
        assert_eq!(set.shape(), (2, 3));
        assert_eq!(unpatchify(&set, 5, 7).unwrap(), m);
        assert!(unpatchify(&set, 7, 7).is_err());
        assert!(patchify(&m, 0).is_err());
    }

    #[test]
    fn zero_tokens_and_single_patch() {
        let zeros = BeliefMap::zeros(4, 4, 3).unwrap();
        let back = unpatchify(&patchify(&zeros, 2).unwrap(), 4, 4).unwrap();
        assert!(back.data().iter().all(|&v| v == 0.0));

        let m = ramp(3, 3, 2);
        let set = patchify(&m, 3).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.token(0), m.data());
    }

    #[test]
    fn energy_examples() {
        let bank = MemoryBank::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0], vec![3.0, 0.5]], 2.0).unwrap();
        assert_relative_eq!(hopfield_energy(&[0.0, 0.0], &bank).unwrap(), -(3.0f64).ln() / 2.0, epsilon = 1e-15);

        let m = vec![0.5, -1.5, 2.0];
        let single = MemoryBank::from_rows(std::slice::from_ref(&m), 1.0).unwrap();
        let norm2: f64 = m.iter().map(|x| x * x).sum();
        assert_relative_eq!(hopfield_energy(&m, &single).unwrap(), -0.5 * norm2, epsilon = 1e-12);
    }

    #[test]
    fn single_memory_full_step_retrieves_it() {
        let m = vec![0.2, -0.7, 1.1, 0.0];
        let bank = MemoryBank::from_rows(std::slice::from_ref(&m), 3.0).unwrap();
        assert_eq!(hopfield_step(&[5.0, 1.0, -2.0, 0.5], &bank, 1.0).unwrap(), m);
        // Already at the retrieved point: unchanged up to rounding.
        for (a, b) in hopfield_step(&m, &bank, 0.4).unwrap().iter().zip(&m) {
            assert_relative_eq!(*a, *b, max_relative = 1e-15);
        }
    }

    #[test]
    fn orthogonal_memories_high_beta() {
        let bank = MemoryBank::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 10.0).unwrap();
        let out = hopfield_step(&[1.0, 0.0], &bank, 1.0).unwrap();
        let p = 1.0 / (1.0 + (-10.0f64).exp());
        assert_relative_eq!(out[0], p, epsilon = 1e-15);
        assert!((out[0] - 1.0).abs() < 1e-3 && out[1].abs() < 1e-3);
    }

    #[test]
    fn zero_memories_contract() {
        let bank = MemoryBank::new(3, 2, 1.0, vec![0.0; 6]).unwrap();
        let v = [4.0, -2.0];
        let out = hopfield_step(&v, &bank, 0.25).unwrap();
        assert_eq!(out, vec![3.0, -1.5]);
    }

    #[test]
    fn kmeans_examples() {
        let tokens = BeliefMap::new(2, 2, 1, vec![0.5; 4]).unwrap();
        let bank = learn_memories(&[patchify(&tokens, 1).unwrap()], 1, 9).unwrap();
        assert_eq!(bank.memory(0), &[0.5]);

        let distinct = BeliefMap::new(2, 3, 1, vec![1.0, 7.0, -2.0, 0.0, 3.5, 9.0]).unwrap();
        let set = patchify(&distinct, 1).unwrap();
        let bank = learn_memories(std::slice::from_ref(&set), 6, 4).unwrap();
        let mut got: Vec<f64> = (0..6).map(|i| bank.memory(i)[0]).collect();
        got.sort_by(f64::total_cmp);
        let mut want = distinct.data().to_vec();
        want.sort_by(f64::total_cmp);
        assert_eq!(got, want);

        assert!(learn_memories(&[set], 7, 0).is_err());
    }

    #[test]
    fn bank_file_round_trip() {
        let bank = MemoryBank::from_rows(&[vec![1.0, -2.5, 3.25], vec![0.0, 1e-300, -7.0]], 0.75).unwrap();
        let mut buf = Vec::new();
        bank.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HOPF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 0.75);
        assert_eq!(buf.len(), 24 + 6 * 8);
        assert_eq!(MemoryBank::read_from(buf.as_slice()).unwrap(), bank);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(MemoryBank::read_from(bad.as_slice()).is_err());
        assert!(MemoryBank::read_from(&buf[..30]).is_err());
    }

    #[test]
    fn run_zero_iterations_is_identity() {
        let m = ramp(4, 4, 2);
        let bank = MemoryBank::new(2, 8, 1.0, vec![0.1; 16]).unwrap();
        let traj = run_hopfield(&m, &bank, 0.5, 0, 2, false).unwrap();
        assert_eq!(traj.final_map, m);
        assert_eq!(traj.energies.len(), 1);
    }
}
