//! Synthetic polygon dataset.
//!
//! Each instance is a grayscale canvas holding one filled shape (intensity 255 on a
//! 0 background) and a pixel mask labelling shape pixels with the shape's class.
//! Classes are irregular polygons with 3 to 13 sides plus the circle, twelve in all.

use std::f64::consts::PI;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::Image;
use crate::rng::{self, StreamRng};

pub const SHAPE_INTENSITY: f64 = 255.0;

/// Number of mask labels: background plus the twelve shape classes.
pub const NUM_LABELS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeClass {
    Polygon(u8),
    Circle,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 12] = [
        ShapeClass::Polygon(3),
        ShapeClass::Polygon(4),
        ShapeClass::Polygon(5),
        ShapeClass::Polygon(6),
        ShapeClass::Polygon(7),
        ShapeClass::Polygon(8),
        ShapeClass::Polygon(9),
        ShapeClass::Polygon(10),
        ShapeClass::Polygon(11),
        ShapeClass::Polygon(12),
        ShapeClass::Polygon(13),
        ShapeClass::Circle,
    ];

    /// Mask label: 1 for triangles up to 11 for 13-gons, 12 for the circle.
    pub fn label(self) -> usize {
        match self {
            ShapeClass::Polygon(k) => k as usize - 2,
            ShapeClass::Circle => 12,
        }
    }

    pub fn from_label(label: usize) -> Option<ShapeClass> {
        label.checked_sub(1).and_then(|i| ShapeClass::ALL.get(i).copied())
    }

    pub fn sides(self) -> Option<usize> {
        match self {
            ShapeClass::Polygon(k) => Some(k as usize),
            ShapeClass::Circle => None,
        }
    }

    pub fn parse(s: &str) -> Option<ShapeClass> {
        match s {
            "circle" | "inf" => Some(ShapeClass::Circle),
            _ => s.parse::<u8>().ok().filter(|k| (3..=13).contains(k)).map(ShapeClass::Polygon),
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeClass::Polygon(k) => write!(f, "{k}"),
            ShapeClass::Circle => f.write_str("circle"),
        }
    }
}

/// Geometry knobs for the shape generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams {
    /// Radius range as a fraction of `min(height, width)`.
    pub radius: (f64, f64),
    /// Per-vertex radial jitter as a fraction of the radius.
    pub radial_jitter: (f64, f64),
    /// Angular jitter, in units of `π / sides`.
    pub angle_jitter: f64,
    /// Smallest exterior turn a vertex may have, as a fraction of the regular turn `2π / sides`.
    pub min_turn: f64,
    /// Smallest distance, in pixels, from a vertex to the chord joining its two
    /// neighbors, so that corners survive rasterization.
    pub min_salience: f64,
    /// Redraws allowed before the radial jitter is narrowed to zero.
    pub attempts: usize,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            radius: (0.15, 0.35),
            radial_jitter: (0.7, 1.0),
            angle_jitter: 0.25,
            min_turn: 0.35,
            min_salience: 2.5,
            attempts: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeInstance {
    pub image: Image,
    /// 0 for background, `shape_class.label()` on the shape.
    pub mask: Vec<usize>,
    pub shape_class: ShapeClass,
    /// Seed of the instance's own random stream.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub epsilon: f64,
}

/// Draws a vertex ring for a `sides`-gon; `spread` in [0, 1] scales the radial jitter.
fn polygon_vertices(
    sides: usize,
    center: (f64, f64),
    radius: f64,
    spread: f64,
    params: &ShapeParams,
    rng: &mut StreamRng,
) -> Vec<(f64, f64)> {
    let k = sides as f64;
    let jitter = params.angle_jitter * PI / k;
    let (lo, hi) = params.radial_jitter;
    let lo = hi - spread * (hi - lo);
    (0..sides)
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / k + rng.random_range(-jitter..=jitter);
            let r = radius * if hi > lo { rng.random_range(lo..=hi) } else { hi };
            (center.0 + r * theta.cos(), center.1 + r * theta.sin())
        })
        .collect()
}

/// Strictly convex with every exterior turn at least `min_turn` radians and every
/// vertex at least `min_salience` off the chord of its neighbors.
fn shape_ok(vertices: &[(f64, f64)], min_turn: f64, min_salience: f64) -> bool {
    let n = vertices.len();
    (0..n).all(|i| {
        let (a, b, c) = (vertices[(i + n - 1) % n], vertices[i], vertices[(i + 1) % n]);
        let (ux, uy) = (b.0 - a.0, b.1 - a.1);
        let (vx, vy) = (c.0 - b.0, c.1 - b.1);
        let turn = (ux * vy - uy * vx).atan2(ux * vx + uy * vy);
        let (wx, wy) = (c.0 - a.0, c.1 - a.1);
        let salience = (wx * (b.1 - a.1) - wy * (b.0 - a.0)).abs() / wx.hypot(wy);
        turn >= min_turn && salience >= min_salience
    })
}

/// Pixels whose centres fall inside the polygon, by scanline.
fn fill_polygon(vertices: &[(f64, f64)], height: usize, width: usize, mask: &mut [bool]) {
    let n = vertices.len();
    let mut crossings = Vec::with_capacity(n);
    for row in 0..height {
        let y = row as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (x0, y0) = vertices[i];
            let (x1, y1) = vertices[(i + 1) % n];
            if (y0 <= y) != (y1 <= y) {
                crossings.push(x0 + (y - y0) / (y1 - y0) * (x1 - x0));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            // Centre x + 0.5 in [span0, span1).
            let start = (span[0] - 0.5).ceil().max(0.0) as usize;
            let end = ((span[1] - 0.5).ceil().max(0.0) as usize).min(width);
            for col in start..end {
                mask[row * width + col] = true;
            }
        }
    }
}

fn fill_disc(center: (f64, f64), radius: f64, height: usize, width: usize, mask: &mut [bool]) {
    for row in 0..height {
        for col in 0..width {
            let dx = col as f64 + 0.5 - center.0;
            let dy = row as f64 + 0.5 - center.1;
            if dx * dx + dy * dy <= radius * radius {
                mask[row * width + col] = true;
            }
        }
    }
}

/// Renders one shape of class `cls` on an `height × width` canvas.
pub fn generate_polygon(cls: ShapeClass, height: usize, width: usize, rng: &mut StreamRng) -> Result<ShapeInstance> {
    generate_with(cls, height, width, &ShapeParams::default(), rng)
}

pub fn generate_with(
    cls: ShapeClass,
    height: usize,
    width: usize,
    params: &ShapeParams,
    rng: &mut StreamRng,
) -> Result<ShapeInstance> {
    if height < 16 || width < 16 {
        return Err(Error::invalid(format!("canvas must be at least 16x16, got {height}x{width}")));
    }
    let (h, w) = (height as f64, width as f64);
    let center = (rng.random_range(0.25 * w..=0.75 * w), rng.random_range(0.25 * h..=0.75 * h));
    let side = h.min(w);
    let radius = rng.random_range(params.radius.0 * side..=params.radius.1 * side);

    let mut inside = vec![false; height * width];
    match cls {
        ShapeClass::Circle => fill_disc(center, radius, height, width, &mut inside),
        ShapeClass::Polygon(k) => {
            let k = k as usize;
            let min_turn = params.min_turn * 2.0 * PI / k as f64;
            let mut vertices = Vec::new();
            for attempt in 0..=params.attempts {
                let spread = 1.0 - attempt as f64 / params.attempts.max(1) as f64;
                vertices = polygon_vertices(k, center, radius, spread, params, rng);
                if shape_ok(&vertices, min_turn, params.min_salience) {
                    break;
                }
            }
            fill_polygon(&vertices, height, width, &mut inside);
        }
    }
    let label = cls.label();
    let mask: Vec<usize> = inside.iter().map(|&s| if s { label } else { 0 }).collect();
    let pixels = inside.iter().map(|&s| if s { SHAPE_INTENSITY } else { 0.0 }).collect();
    Ok(ShapeInstance { image: Image::new(height, width, 1, pixels)?, mask, shape_class: cls, seed: 0 })
}

/// Seed of instance `index` in a dataset drawn with `seed`.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    rng::derive_seed(seed, &[index as u64])
}

/// `n` instances, each with a class drawn uniformly from the twelve classes.
///
/// Instance `i` uses its own stream seeded from `(seed, i)`, so the result does not
/// depend on how generation is scheduled.
pub fn generate_dataset(n: usize, height: usize, width: usize, seed: u64) -> Result<Vec<ShapeInstance>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let s = instance_seed(seed, i);
            let mut rng = rng::stream(s, &[]);
            let cls = ShapeClass::ALL[rng.random_range(0..ShapeClass::ALL.len())];
            let mut inst = generate_polygon(cls, height, width, &mut rng)?;
            inst.seed = s;
            Ok(inst)
        })
        .collect()
}

/// Adds i.i.d. Gaussian noise with standard deviation `spec.epsilon` to every value.
pub fn corrupt(image: &Image, spec: NoiseSpec, rng: &mut StreamRng) -> Result<Image> {
    if !(spec.epsilon >= 0.0 && spec.epsilon.is_finite()) {
        return Err(Error::invalid(format!("noise level must be nonnegative, got {}", spec.epsilon)));
    }
    let mut out = image.clone();
    if spec.epsilon == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, spec.epsilon).map_err(|e| Error::invalid(e.to_string()))?;
    for v in out.data_mut() {
        *v += normal.sample(rng);
    }
    Ok(out)
}

fn write_pgm(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

/// Writes `images/`, `images_f32/`, `masks/` and `manifest.csv` under `dir`.
pub fn save_dataset(instances: &[ShapeInstance], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["images", "images_f32", "masks"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut manifest =
        csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(dir.join("manifest.csv"))?;
    manifest.write_record(["index", "class", "seed"])?;
    for (i, inst) in instances.iter().enumerate() {
        let name = format!("{i:04}");
        let (h, w) = (inst.image.height(), inst.image.width());
        let gray: Vec<u8> = inst.image.data().iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        write_pgm(&dir.join("images").join(format!("{name}.pgm")), w, h, &gray)?;
        let raw: Vec<u8> = inst.image.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        fs::write(dir.join("images_f32").join(format!("{name}.bin")), raw)?;
        let labels: Vec<u8> = inst.mask.iter().map(|&l| l as u8).collect();
        write_pgm(&dir.join("masks").join(format!("{name}.pgm")), w, h, &labels)?;
        manifest.write_record([i.to_string(), inst.shape_class.to_string(), inst.seed.to_string()])?;
    }
    manifest.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_distinct_labels() {
        let labels: std::collections::BTreeSet<_> = ShapeClass::ALL.iter().map(|c| c.label()).collect();
        assert_eq!(labels.len(), 12);
        assert_eq!(*labels.iter().next().unwrap(), 1);
        assert_eq!(*labels.iter().last().unwrap(), NUM_LABELS - 1);
        for c in ShapeClass::ALL {
            assert_eq!(ShapeClass::from_label(c.label()), Some(c));
            assert_eq!(ShapeClass::parse(&c.to_string()), Some(c));
        }
        assert_eq!(ShapeClass::from_label(0), None);
        assert_eq!(ShapeClass::parse("14"), None);
    }

    #[test]
    fn mask_matches_image() {
        let mut rng = rng::stream(1, &[]);
        for cls in ShapeClass::ALL {
            let inst = generate_polygon(cls, 48, 64, &mut rng).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for (m, &v) in inst.mask.iter().zip(inst.image.data()) {
                assert_eq!(*m != 0, v == SHAPE_INTENSITY);
                seen.insert(*m);
            }
            assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![0, cls.label()]);
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let a = generate_polygon(ShapeClass::Polygon(5), 32, 32, &mut rng::stream(4, &[])).unwrap();
        let b = generate_polygon(ShapeClass::Polygon(5), 32, 32, &mut rng::stream(4, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_canvas_rejected() {
        assert!(generate_polygon(ShapeClass::Circle, 15, 64, &mut rng::stream(0, &[])).is_err());
    }

    #[test]
    fn dataset_basics() {
        assert!(generate_dataset(0, 32, 32, 1).unwrap().is_empty());
        let a = generate_dataset(6, 32, 32, 1).unwrap();
        let b = generate_dataset(6, 32, 32, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, generate_dataset(6, 32, 32, 1).unwrap());
    }

    #[test]
    fn zero_noise_is_identity() {
        let inst = generate_polygon(ShapeClass::Polygon(4), 32, 32, &mut rng::stream(3, &[])).unwrap();
        let out = corrupt(&inst.image, NoiseSpec { epsilon: 0.0 }, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(out, inst.image);
        assert!(corrupt(&inst.image, NoiseSpec { epsilon: -1.0 }, &mut rng::stream(0, &[])).is_err());
    }

    #[test]
    fn noise_moments() {
        let img = Image::filled(128, 128, 1, 0.0).unwrap();
        let out = corrupt(&img, NoiseSpec { epsilon: 10.0 }, &mut rng::stream(12, &[])).unwrap();
        let n = out.data().len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let var = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((9.5..=10.5).contains(&var.sqrt()), "std {}", var.sqrt());
    }
}
