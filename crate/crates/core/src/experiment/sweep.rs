use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::crf::{softmax_in_place, CrfModel};
use crate::error::{Error, Result};
use crate::hopfield::{learn_memories, patchify, unpatchify, MemoryBank, PatchSet};
use crate::lattice::{build_component_graph, laplacian_filter, BeliefMap, ComponentGraph};
use crate::metrics::{
    class_iou, confusion, iou, mean_iou, precision_recall, precision_recall_literal, ConfusionCounts,
};
use crate::rng::{self, derive_seed, StreamRng};
use crate::shapes::{corrupt, generate_dataset, NoiseSpec, ShapeInstance};
use crate::som::som_step;

use super::config::{ExperimentConfig, InitParams, Model};
use super::rows::{ResultRow, WARNING_PREFIX};

// Stream tags under a per-seed root.
const TAG_TEST: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_NOISE: u64 = 3;
const TAG_INIT: u64 = 4;
const TAG_TRAIN_INIT: u64 = 5;
const TAG_KMEANS: u64 = 6;

/// Synthetic beliefs for a label map: softmax of `a·onehot + N(0, b·ε/100)` per pixel.
pub fn init_beliefs(
    mask: &[usize],
    height: usize,
    width: usize,
    classes: usize,
    epsilon: f64,
    params: &InitParams,
    rng: &mut impl Rng,
) -> Result<BeliefMap> {
    if mask.len() != height * width {
        return Err(Error::mismatch(format!("mask has {} pixels, expected {}", mask.len(), height * width)));
    }
    if let Some(bad) = mask.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    let sd = params.b * epsilon / 100.0;
    let normal = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut data = vec![0.0; height * width * classes];
    for (px, &label) in data.chunks_exact_mut(classes).zip(mask) {
        if sd > 0.0 {
            px.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        px[label] += params.a;
        softmax_in_place(px);
    }
    let mut map = BeliefMap::new(height, width, classes, data)?;
    map.set_simplex_unchecked(true);
    Ok(map)
}

fn seed_root(cfg: &ExperimentConfig, seed_index: usize) -> u64 {
    derive_seed(cfg.seed, &[seed_index as u64])
}

fn stream(root: u64, tag: u64, epsilon: f64, index: usize) -> StreamRng {
    rng::stream(root, &[tag, epsilon.to_bits(), index as u64])
}

/// Test set of a seed; identical across noise levels and sample sizes.
fn test_set(cfg: &ExperimentConfig, root: u64) -> Result<Vec<ShapeInstance>> {
    generate_dataset(cfg.test_size, cfg.height, cfg.width, derive_seed(root, &[TAG_TEST]))
}

/// Memories from the initial beliefs of the first `n` training instances.
///
/// Returns the bank and, when fewer tokens than requested memories exist, the
/// clamped memory count.
fn hopfield_bank(cfg: &ExperimentConfig, root: u64, epsilon: f64, n: usize) -> Result<(MemoryBank, Option<usize>)> {
    let train = generate_dataset(n, cfg.height, cfg.width, derive_seed(root, &[TAG_TRAIN]))?;
    let patches: Vec<PatchSet> = train
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut rng = stream(root, TAG_TRAIN_INIT, epsilon, i);
            let map = init_beliefs(&inst.mask, cfg.height, cfg.width, cfg.classes(), epsilon, &cfg.init, &mut rng)?;
            patchify(&map, cfg.hopfield.patch)
        })
        .collect::<Result<_>>()?;
    let tokens: usize = patches.iter().map(PatchSet::len).sum();
    let wanted = cfg.hopfield.memories;
    let count = wanted.min(tokens);
    let clamped = (count < wanted).then(|| {
        warn!("only {tokens} training tokens; using {count} memories instead of {wanted}");
        count
    });
    let seed = rng::derive_seed(root, &[TAG_KMEANS, epsilon.to_bits(), n as u64]);
    let bank = learn_memories(&patches, count, seed)?.with_beta(cfg.hopfield.beta)?;
    Ok((bank, clamped))
}

/// A corrupted test instance with its initial beliefs.
struct Prepared<'a> {
    instance: &'a ShapeInstance,
    image: crate::lattice::Image,
    init: BeliefMap,
}

fn prepare<'a>(
    cfg: &ExperimentConfig,
    root: u64,
    epsilon: f64,
    index: usize,
    inst: &'a ShapeInstance,
) -> Result<Prepared<'a>> {
    let image = corrupt(&inst.image, NoiseSpec { epsilon }, &mut stream(root, TAG_NOISE, epsilon, index))?;
    let mut rng = stream(root, TAG_INIT, epsilon, index);
    let init = init_beliefs(&inst.mask, cfg.height, cfg.width, cfg.classes(), epsilon, &cfg.init, &mut rng)?;
    Ok(Prepared { instance: inst, image, init })
}

/// Confusion counts of `model` at every checkpoint.
fn run_model(
    cfg: &ExperimentConfig,
    model: Model,
    p: &Prepared,
    bank: Option<&MemoryBank>,
    checkpoints: &[usize],
) -> Result<Vec<ConfusionCounts>> {
    let classes = cfg.classes();
    let truth = &p.instance.mask;
    let score = |map: &BeliefMap| confusion(&map.argmax(), truth, classes);
    let last = checkpoints.last().copied().unwrap_or(0);
    let mut out = Vec::with_capacity(checkpoints.len());
    let record = |t: usize, map: &BeliefMap, out: &mut Vec<ConfusionCounts>| -> Result<()> {
        if checkpoints.binary_search(&t).is_ok() {
            out.push(score(map)?);
        }
        Ok(())
    };
    match model {
        Model::Identity => {
            let counts = score(&p.init)?;
            out.resize(checkpoints.len(), counts);
        }
        Model::Som => {
            let fr = laplacian_filter(&p.image)?;
            let graph = build_component_graph(&fr, cfg.som.edge_fraction * fr.range())?;
            let step = cfg.som.step_config();
            let mut map = p.init.clone();
            record(0, &map, &mut out)?;
            for t in 1..=last {
                map = som_step(&map, &graph, &step)?;
                record(t, &map, &mut out)?;
            }
        }
        Model::Crf => {
            let graph = ComponentGraph::full(p.image.grid());
            let crf = CrfModel::new(&p.image, cfg.crf.compatibility(classes)?, &graph)?;
            let step = cfg.crf.step_config();
            let mut map = p.init.clone();
            record(0, &map, &mut out)?;
            for t in 1..=last {
                map = crf.step(&map, &step)?;
                record(t, &map, &mut out)?;
            }
        }
        Model::Hopfield => {
            let bank = bank.ok_or_else(|| Error::invalid("hopfield model needs a memory bank"))?;
            let mut set = patchify(&p.init, cfg.hopfield.patch)?;
            record(0, &p.init, &mut out)?;
            for t in 1..=last {
                set.step(bank, cfg.hopfield.alpha)?;
                if checkpoints.binary_search(&t).is_ok() {
                    out.push(score(&unpatchify(&set, cfg.height, cfg.width)?)?);
                }
            }
        }
    }
    Ok(out)
}

/// Test-set confusion counts per model (in `models` order) and checkpoint.
fn evaluate(
    cfg: &ExperimentConfig,
    root: u64,
    epsilon: f64,
    tests: &[ShapeInstance],
    models: &[Model],
    bank: Option<&MemoryBank>,
    checkpoints: &[usize],
) -> Result<Vec<Vec<ConfusionCounts>>> {
    let per_instance: Vec<Vec<Vec<ConfusionCounts>>> = tests
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let p = prepare(cfg, root, epsilon, i, inst)?;
            models.iter().map(|&m| run_model(cfg, m, &p, bank, checkpoints)).collect()
        })
        .collect::<Result<_>>()?;
    let mut total = vec![vec![ConfusionCounts::new(cfg.classes()); checkpoints.len()]; models.len()];
    for inst in &per_instance {
        for (acc, counts) in total.iter_mut().zip(inst) {
            for (a, c) in acc.iter_mut().zip(counts) {
                a.merge(c)?;
            }
        }
    }
    Ok(total)
}

/// Cell coordinates shared by every row of one model run.
#[derive(Clone, Copy)]
struct Cell {
    noise: f64,
    samples: usize,
    seed: usize,
}

fn row(model: Model, cell: Cell, iteration: usize, class: String, metric: &str, value: f64) -> ResultRow {
    ResultRow {
        model: model.to_string(),
        noise: cell.noise,
        samples: cell.samples,
        iteration,
        seed: cell.seed,
        class,
        metric: metric.to_string(),
        value,
    }
}

/// Aggregate IoU, mean IoU and per-class IoU, precision and recall.
fn metric_rows(
    model: Model,
    cell: Cell,
    iteration: usize,
    counts: &ConfusionCounts,
    literal: bool,
    out: &mut Vec<ResultRow>,
) {
    out.push(row(model, cell, iteration, "all".into(), "iou", iou(counts)));
    out.push(row(model, cell, iteration, "all".into(), "mean_iou", mean_iou(counts)));
    for c in 0..counts.classes() {
        let (p, r) = if literal { precision_recall_literal(counts, c) } else { precision_recall(counts, c) };
        out.push(row(model, cell, iteration, c.to_string(), "iou", class_iou(counts, c)));
        out.push(row(model, cell, iteration, c.to_string(), "precision", p));
        out.push(row(model, cell, iteration, c.to_string(), "recall", r));
    }
}

fn model_rows(cfg: &ExperimentConfig, model: Model, cell: Cell, counts: &[ConfusionCounts], out: &mut Vec<ResultRow>) {
    for (&t, c) in cfg.sorted_checkpoints().iter().zip(counts) {
        metric_rows(model, cell, t, c, cfg.literal_metrics, out);
    }
}

fn clamp_warning(cell: Cell, count: usize) -> ResultRow {
    row(Model::Hopfield, cell, 0, "all".into(), &format!("{WARNING_PREFIX}memories_clamped"), count as f64)
}

/// Every model on every noise level and seed.
///
/// Rows are ordered by noise level, seed, model (config order), checkpoint.
pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let checkpoints = cfg.sorted_checkpoints();
    let cells: Vec<(f64, usize)> = cfg.noise_levels.iter().flat_map(|&e| (0..cfg.seeds).map(move |s| (e, s))).collect();
    let chunks: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|&(epsilon, seed)| {
            let root = seed_root(cfg, seed);
            let tests = test_set(cfg, root)?;
            let cell = Cell { noise: epsilon, samples: cfg.train_size, seed };
            let mut rows = Vec::new();
            let bank = if cfg.models.contains(&Model::Hopfield) {
                let (bank, clamped) = hopfield_bank(cfg, root, epsilon, cfg.train_size)?;
                rows.extend(clamped.map(|c| clamp_warning(cell, c)));
                Some(bank)
            } else {
                None
            };
            let counts = evaluate(cfg, root, epsilon, &tests, &cfg.models, bank.as_ref(), &checkpoints)?;
            for (&m, c) in cfg.models.iter().zip(&counts) {
                model_rows(cfg, m, cell, c, &mut rows);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Every model on the fixed test set for each training-set size and seed, at
/// `sample_sweep_noise`.
///
/// Only Hopfield memories depend on the training set, so the other models are
/// evaluated once per seed and their rows repeated for each size. Training sets are
/// nested: the set of size `n` is the first `n` instances of every larger one.
pub fn run_sample_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let checkpoints = cfg.sorted_checkpoints();
    let epsilon = cfg.sample_sweep_noise;
    let fixed: Vec<Model> = cfg.models.iter().copied().filter(|&m| m != Model::Hopfield).collect();
    let with_hopfield = cfg.models.contains(&Model::Hopfield);

    let per_seed: Vec<(Vec<ShapeInstance>, Vec<Vec<ConfusionCounts>>)> = (0..cfg.seeds)
        .into_par_iter()
        .map(|seed| {
            let root = seed_root(cfg, seed);
            let tests = test_set(cfg, root)?;
            let counts = evaluate(cfg, root, epsilon, &tests, &fixed, None, &checkpoints)?;
            Ok((tests, counts))
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> =
        cfg.sample_sizes.iter().flat_map(|&n| (0..cfg.seeds).map(move |s| (n, s))).collect();
    let chunks: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|&(n, seed)| {
            let root = seed_root(cfg, seed);
            let cell = Cell { noise: epsilon, samples: n, seed };
            let (tests, fixed_counts) = &per_seed[seed];
            let mut rows = Vec::new();
            let mut hopfield_counts = None;
            if with_hopfield {
                let (bank, clamped) = hopfield_bank(cfg, root, epsilon, n)?;
                rows.extend(clamped.map(|c| clamp_warning(cell, c)));
                let counts = evaluate(cfg, root, epsilon, tests, &[Model::Hopfield], Some(&bank), &checkpoints)?;
                hopfield_counts = counts.into_iter().next();
            }
            let mut fixed_iter = fixed_counts.iter();
            for &m in &cfg.models {
                let counts = if m == Model::Hopfield {
                    hopfield_counts.as_ref().expect("hopfield evaluated")
                } else {
                    fixed_iter.next().expect("one entry per fixed model")
                };
                model_rows(cfg, m, cell, counts, &mut rows);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Mean distance from the test-set tokens to their nearest memory, for memories
/// learned from `n` training instances at noise `epsilon`.
pub fn memory_reconstruction_error(cfg: &ExperimentConfig, seed: usize, epsilon: f64, n: usize) -> Result<f64> {
    let root = seed_root(cfg, seed);
    let (bank, _) = hopfield_bank(cfg, root, epsilon, n)?;
    let tests = test_set(cfg, root)?;
    let patches: Vec<PatchSet> = tests
        .par_iter()
        .enumerate()
        .map(|(i, inst)| patchify(&prepare(cfg, root, epsilon, i, inst)?.init, cfg.hopfield.patch))
        .collect::<Result<_>>()?;
    crate::hopfield::reconstruction_error(&bank, &patches)
}
