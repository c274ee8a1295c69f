//! Pixel lattice, image filters and the component-gated neighbor graph.
//!
//! All grids are stored row-major. A pixel index `i` corresponds to
//! `(row, col) = (i / width, i % width)`; per-pixel vectors (image channels,
//! belief classes) are contiguous.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// One of the four lattice directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    /// Fixed visiting order used by every sweep in the crate.
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    pub fn slot(self) -> usize {
        self as usize
    }
}

/// Height/width of a pixel lattice plus index arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
}

impl Grid {
    pub fn new(height: usize, width: usize) -> Self {
        Grid { height, width }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coord(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    /// Index of the lattice neighbor in `dir`, or `None` when it falls off the grid.
    #[inline]
    pub fn step(&self, index: usize, dir: Direction) -> Option<usize> {
        let (row, col) = self.coord(index);
        match dir {
            Direction::Up if row > 0 => Some(index - self.width),
            Direction::Down if row + 1 < self.height => Some(index + self.width),
            Direction::Left if col > 0 => Some(index - 1),
            Direction::Right if col + 1 < self.width => Some(index + 1),
            _ => None,
        }
    }

    /// The pixel itself followed by its in-bounds 4-neighbors (up, down, left, right).
    pub fn neighbors(&self, row: usize, col: usize) -> Result<Vec<(usize, usize)>> {
        if row >= self.height || col >= self.width {
            return Err(Error::invalid(format!(
                "coordinate ({row}, {col}) outside {}x{} grid",
                self.height, self.width
            )));
        }
        let center = self.index(row, col);
        let mut out = Vec::with_capacity(5);
        out.push((row, col));
        for dir in Direction::ALL {
            if let Some(j) = self.step(center, dir) {
                out.push(self.coord(j));
            }
        }
        Ok(out)
    }
}

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite values")))
    }
}

/// Real-valued image with `channels` values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(Error::mismatch(format!(
                "image buffer has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        check_finite(&data, "image")?;
        Ok(Image { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    fn channel_mean(&self) -> Vec<f64> {
        let c = self.channels as f64;
        self.data.chunks_exact(self.channels).map(|px| px.iter().sum::<f64>() / c).collect()
    }
}

/// Per-pixel belief vectors over `classes` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f64>,
    simplex: bool,
}

impl BeliefMap {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || classes == 0 {
            return Err(Error::invalid("belief map dimensions must be positive"));
        }
        if data.len() != height * width * classes {
            return Err(Error::mismatch(format!(
                "belief buffer has {} values, expected {height}x{width}x{classes}",
                data.len()
            )));
        }
        check_finite(&data, "belief map")?;
        Ok(BeliefMap { height, width, classes, data, simplex: false })
    }

    pub fn zeros(height: usize, width: usize, classes: usize) -> Result<Self> {
        BeliefMap::new(height, width, classes, vec![0.0; height * width * classes])
    }

    /// Builds a map from per-pixel vectors in row-major pixel order.
    pub fn from_pixels(height: usize, width: usize, pixels: &[Vec<f64>]) -> Result<Self> {
        let classes = pixels.first().map_or(0, Vec::len);
        if pixels.iter().any(|p| p.len() != classes) {
            return Err(Error::mismatch("pixel vectors differ in length"));
        }
        BeliefMap::new(height, width, classes, pixels.concat())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.classes..(index + 1) * self.classes]
    }

    pub fn pixel_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.classes..(index + 1) * self.classes]
    }

    /// Whether the map is flagged as holding probability vectors.
    pub fn is_simplex(&self) -> bool {
        self.simplex
    }

    /// Flags the map as simplex-valued after checking every pixel.
    pub fn mark_simplex(&mut self) -> Result<()> {
        if !self.satisfies_simplex(1e-6) {
            return Err(Error::invalid("belief map is not simplex-valued"));
        }
        self.simplex = true;
        Ok(())
    }

    pub(crate) fn set_simplex_unchecked(&mut self, flag: bool) {
        self.simplex = flag;
    }

    /// True when every pixel vector is nonnegative and sums to one within `tol`.
    pub fn satisfies_simplex(&self, tol: f64) -> bool {
        self.data
            .chunks_exact(self.classes)
            .all(|px| px.iter().all(|&p| p >= -tol) && (px.iter().sum::<f64>() - 1.0).abs() <= tol)
    }

    /// Per-pixel argmax label; ties go to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.data
            .chunks_exact(self.classes)
            .map(|px| {
                let mut best = 0;
                for (c, &v) in px.iter().enumerate().skip(1) {
                    if v > px[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub(crate) fn check_grid(&self, grid: Grid, what: &str) -> Result<()> {
        if self.grid() != grid {
            return Err(Error::mismatch(format!(
                "belief map is {}x{} but {what} is {}x{}",
                self.height, self.width, grid.height, grid.width
            )));
        }
        Ok(())
    }
}

/// One scalar filter value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResponse {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FilterResponse {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::mismatch("filter response size does not match grid"));
        }
        check_finite(&data, "filter response")?;
        Ok(FilterResponse { height, width, data })
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// `max - min` over all pixels.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }
}

/// An image filter producing one response value per pixel.
pub trait Filter {
    fn apply(&self, image: &Image) -> Result<FilterResponse>;
}

/// 4-neighbor Laplacian of the channel-mean image with edge replication.
#[derive(Debug, Clone, Copy, Default)]
pub struct Laplacian;

impl Filter for Laplacian {
    fn apply(&self, image: &Image) -> Result<FilterResponse> {
        let (h, w) = (image.height, image.width);
        if h < 2 || w < 2 {
            return Err(Error::invalid(format!("laplacian needs at least 2x2 pixels, got {h}x{w}")));
        }
        let mean = image.channel_mean();
        let at = |r: usize, c: usize| mean[r * w + c];
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                let up = at(r.saturating_sub(1), c);
                let down = at((r + 1).min(h - 1), c);
                let left = at(r, c.saturating_sub(1));
                let right = at(r, (c + 1).min(w - 1));
                out.push(up + down + left + right - 4.0 * at(r, c));
            }
        }
        FilterResponse::new(h, w, out)
    }
}

pub fn laplacian_filter(image: &Image) -> Result<FilterResponse> {
    Laplacian.apply(image)
}

/// Default edge threshold: a tenth of the response's dynamic range.
pub fn default_edge_threshold(fr: &FilterResponse) -> f64 {
    0.1 * fr.range()
}

/// The 4-neighbor lattice with some edges dropped, plus its connected components.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGraph {
    grid: Grid,
    edges: Vec<[bool; 4]>,
    labels: Vec<usize>,
    components: usize,
}

impl ComponentGraph {
    /// Keeps the edge between lattice neighbors `i` and `j` iff `keep(i, j)`.
    ///
    /// The predicate is evaluated once per unordered edge, so the mask is symmetric
    /// whatever `keep` does.
    pub fn from_predicate(grid: Grid, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let mut edges = vec![[false; 4]; grid.len()];
        for i in 0..grid.len() {
            for dir in [Direction::Down, Direction::Right] {
                if let Some(j) = grid.step(i, dir) {
                    if keep(i, j) {
                        edges[i][dir.slot()] = true;
                        edges[j][dir.opposite().slot()] = true;
                    }
                }
            }
        }
        let (labels, components) = flood_fill(grid, &edges);
        ComponentGraph { grid, edges, labels, components }
    }

    /// Every lattice edge kept.
    pub fn full(grid: Grid) -> Self {
        ComponentGraph::from_predicate(grid, |_, _| true)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn kept(&self, index: usize, dir: Direction) -> bool {
        self.edges[index][dir.slot()]
    }

    /// Neighbor in `dir` if the connecting edge is kept.
    #[inline]
    pub fn kept_neighbor(&self, index: usize, dir: Direction) -> Option<usize> {
        if self.kept(index, dir) {
            self.grid.step(index, dir)
        } else {
            None
        }
    }

    pub fn kept_neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        Direction::ALL.into_iter().filter_map(move |d| self.kept_neighbor(index, d))
    }

    pub fn degree(&self, index: usize) -> usize {
        self.edges[index].iter().filter(|&&k| k).count()
    }

    pub fn edge_mask(&self) -> &[[bool; 4]] {
        &self.edges
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    pub fn kept_edge_count(&self) -> usize {
        self.edges.iter().map(|e| e.iter().filter(|&&k| k).count()).sum::<usize>() / 2
    }
}

/// Drops every lattice edge whose response difference exceeds `epsilon`.
///
/// `f64::INFINITY` keeps every edge.
pub fn build_component_graph(fr: &FilterResponse, epsilon: f64) -> Result<ComponentGraph> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::invalid(format!("edge threshold must be nonnegative, got {epsilon}")));
    }
    let data = fr.data();
    Ok(ComponentGraph::from_predicate(fr.grid(), |i, j| (data[i] - data[j]).abs() <= epsilon))
}

/// Component labels in first-seen raster order.
fn flood_fill(grid: Grid, edges: &[[bool; 4]]) -> (Vec<usize>, usize) {
    const UNSEEN: usize = usize::MAX;
    let mut labels = vec![UNSEEN; grid.len()];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for seed in 0..grid.len() {
        if labels[seed] != UNSEEN {
            continue;
        }
        labels[seed] = next;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            for dir in Direction::ALL {
                if !edges[i][dir.slot()] {
                    continue;
                }
                if let Some(j) = grid.step(i, dir) {
                    if labels[j] == UNSEEN {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        next += 1;
    }
    (labels, next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Image::new(h, w, 1, data).unwrap()
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let img = Image::filled(5, 7, 3, 42.5).unwrap();
        let fr = laplacian_filter(&img).unwrap();
        assert!(fr.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_impulse() {
        let img = gray(3, 3, |r, c| if (r, c) == (1, 1) { 1.0 } else { 0.0 });
        let fr = laplacian_filter(&img).unwrap();
        #[rustfmt::skip]
        let expected = [
            0.0, 1.0, 0.0,
            1.0, -4.0, 1.0,
            0.0, 1.0, 0.0,
        ];
        assert_eq!(fr.data(), &expected);
    }

    #[test]
    fn laplacian_vertical_step() {
        let img = gray(6, 8, |_, c| if c < 4 { 0.0 } else { 10.0 });
        let fr = laplacian_filter(&img).unwrap();
        for r in 0..6 {
            for c in 0..8 {
                let v = fr.value(r, c);
                match c {
                    3 => assert_eq!(v, 10.0),
                    4 => assert_eq!(v, -10.0),
                    _ => assert_eq!(v, 0.0),
                }
            }
        }
    }

    #[test]
    fn laplacian_uses_channel_mean() {
        let img = Image::new(2, 2, 2, vec![0.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(laplacian_filter(&img).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_rejects_tiny_images() {
        let img = Image::filled(1, 5, 1, 0.0).unwrap();
        assert!(matches!(laplacian_filter(&img), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn constant_response_is_one_component() {
        let fr = FilterResponse::new(4, 5, vec![3.0; 20]).unwrap();
        for eps in [0.0, 0.5, f64::INFINITY] {
            let g = build_component_graph(&fr, eps).unwrap();
            assert_eq!(g.component_count(), 1);
            assert_eq!(g.kept_edge_count(), 4 * 4 + 3 * 5);
        }
    }

    #[test]
    fn step_response_splits_in_two() {
        let data = (0..20).map(|i| if i % 5 < 2 { 0.0 } else { 5.0 }).collect();
        let fr = FilterResponse::new(4, 5, data).unwrap();
        let g = build_component_graph(&fr, 1.0).unwrap();
        assert_eq!(g.component_count(), 2);
        for r in 0..4 {
            assert!(!g.kept(r * 5 + 1, Direction::Right));
            assert!(!g.kept(r * 5 + 2, Direction::Left));
        }
        let all = build_component_graph(&fr, f64::INFINITY).unwrap();
        assert_eq!(all.component_count(), 1);
    }

    #[test]
    fn negative_threshold_rejected() {
        let fr = FilterResponse::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(build_component_graph(&fr, -1.0).is_err());
        assert!(build_component_graph(&fr, f64::NAN).is_err());
    }

    #[test]
    fn off_grid_directions_never_kept() {
        let g = ComponentGraph::full(Grid::new(3, 4));
        for i in 0..12 {
            for dir in Direction::ALL {
                if g.grid().step(i, dir).is_none() {
                    assert!(!g.kept(i, dir));
                }
            }
        }
    }

    #[test]
    fn neighbor_counts() {
        let g = Grid::new(4, 4);
        assert_eq!(g.neighbors(1, 2).unwrap().len(), 5);
        assert_eq!(g.neighbors(0, 0).unwrap(), vec![(0, 0), (1, 0), (0, 1)]);
        assert_eq!(g.neighbors(0, 2).unwrap().len(), 4);
        let column = Grid::new(5, 1);
        assert_eq!(column.neighbors(2, 0).unwrap(), vec![(2, 0), (1, 0), (3, 0)]);
        assert!(g.neighbors(4, 0).is_err());
    }

    #[test]
    fn belief_map_validation() {
        assert!(BeliefMap::new(2, 2, 2, vec![0.0; 7]).is_err());
        assert!(BeliefMap::new(1, 1, 2, vec![f64::NAN, 0.0]).is_err());
        let mut m = BeliefMap::new(1, 2, 2, vec![0.5, 0.5, 1.0, 0.0]).unwrap();
        assert!(!m.is_simplex());
        m.mark_simplex().unwrap();
        assert!(m.is_simplex());
        let mut bad = BeliefMap::new(1, 1, 2, vec![0.7, 0.7]).unwrap();
        assert!(bad.mark_simplex().is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let m = BeliefMap::new(1, 3, 3, vec![0.2, 0.2, 0.1, 0.0, 1.0, 1.0, 0.1, 0.2, 0.3]).unwrap();
        assert_eq!(m.argmax(), vec![0, 1, 2]);
    }
}
