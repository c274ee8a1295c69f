//! Segmentation losses and evaluation metrics.
//!
//! Labels are class indices in `0..L`; ground-truth one-hot maps are represented by
//! their label map. Counts follow the convention `F(i|j)` = pixels predicted `i`
//! whose truth is `j`.

use crate::error::{Error, Result};
use crate::lattice::BeliefMap;

const LOG_FLOOR: f64 = 1e-12;

/// `L × L` confusion counts indexed `[predicted][truth]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(classes: usize) -> Self {
        ConfusionCounts { classes, counts: vec![0; classes * classes] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Pixels predicted `pred` whose truth is `truth`.
    pub fn get(&self, pred: usize, truth: usize) -> u64 {
        self.counts[pred * self.classes + truth]
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.get(class, class)
    }

    /// `Σ_j F(class|j)`: predicted `class`, truth elsewhere.
    pub fn false_positives(&self, class: usize) -> u64 {
        (0..self.classes).filter(|&j| j != class).map(|j| self.get(class, j)).sum()
    }

    /// `Σ_j F(j|class)`: truth `class`, predicted elsewhere.
    pub fn false_negatives(&self, class: usize) -> u64 {
        (0..self.classes).filter(|&j| j != class).map(|j| self.get(j, class)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn record(&mut self, pred: usize, truth: usize) {
        self.counts[pred * self.classes + truth] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionCounts) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::mismatch("confusion counts differ in class count"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

pub fn confusion(pred: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::mismatch(format!("prediction has {} pixels, truth {}", pred.len(), truth.len())));
    }
    let mut counts = ConfusionCounts::new(classes);
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::invalid(format!("label {} out of range for {classes} classes", p.max(t))));
        }
        counts.record(p, t);
    }
    Ok(counts)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Aggregate IoU `Σ_i T_i / Σ_i Σ_j (T_i + F(i|j) + F(j|i))`, with `j` over all
/// classes and `F(i|i) = 0`.
///
/// The denominator counts each `T_i` once per class, so a perfect prediction scores
/// `1 / L`; see [`mean_iou`] for the usual per-class average.
pub fn iou(counts: &ConfusionCounts) -> f64 {
    let l = counts.classes;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..l {
        let t = counts.true_positives(i) as f64;
        num += t;
        den += l as f64 * t + (counts.false_positives(i) + counts.false_negatives(i)) as f64;
    }
    ratio(num, den)
}

/// `T / (T + FP + FN)` for one class.
pub fn class_iou(counts: &ConfusionCounts, class: usize) -> f64 {
    let t = counts.true_positives(class) as f64;
    ratio(t, t + (counts.false_positives(class) + counts.false_negatives(class)) as f64)
}

/// Mean per-class IoU over classes present in truth or prediction.
pub fn mean_iou(counts: &ConfusionCounts) -> f64 {
    let present: Vec<usize> = (0..counts.classes)
        .filter(|&c| counts.true_positives(c) + counts.false_positives(c) + counts.false_negatives(c) > 0)
        .collect();
    ratio(present.iter().map(|&c| class_iou(counts, c)).sum(), present.len() as f64)
}

/// Standard `(precision, recall)` for `class`; 0 where a denominator vanishes.
pub fn precision_recall(counts: &ConfusionCounts, class: usize) -> (f64, f64) {
    let t = counts.true_positives(class) as f64;
    (ratio(t, t + counts.false_positives(class) as f64), ratio(t, t + counts.false_negatives(class) as f64))
}

/// Hits divided by misses only: `T_i / Σ_j F(i|j)` and `T_i / Σ_j F(j|i)`.
///
/// Unbounded above; 0 where a denominator vanishes.
pub fn precision_recall_literal(counts: &ConfusionCounts, class: usize) -> (f64, f64) {
    let t = counts.true_positives(class) as f64;
    (ratio(t, counts.false_positives(class) as f64), ratio(t, counts.false_negatives(class) as f64))
}

fn check_labels(probs: &BeliefMap, truth: &[usize]) -> Result<()> {
    if truth.len() != probs.grid().len() {
        return Err(Error::mismatch(format!("truth has {} pixels, beliefs {}", truth.len(), probs.grid().len())));
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= probs.classes()) {
        return Err(Error::invalid(format!("truth label {bad} out of range")));
    }
    Ok(())
}

fn check_probs(probs: &BeliefMap, truth: &[usize]) -> Result<()> {
    check_labels(probs, truth)?;
    if !probs.satisfies_simplex(1e-6) {
        return Err(Error::invalid("probabilities must lie on the simplex"));
    }
    Ok(())
}

/// Generalized dice loss with weights `1 / (class area)²`.
///
/// Classes absent from the truth carry no weight and drop out of both sums.
pub fn generalized_dice_loss(probs: &BeliefMap, truth: &[usize]) -> Result<f64> {
    check_probs(probs, truth)?;
    let l = probs.classes();
    let mut area = vec![0.0; l];
    let mut overlap = vec![0.0; l];
    let mut mass = vec![0.0; l];
    for (i, &t) in truth.iter().enumerate() {
        area[t] += 1.0;
        overlap[t] += probs.pixel(i)[t];
        for (m, &p) in mass.iter_mut().zip(probs.pixel(i)) {
            *m += p;
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..l {
        if area[c] == 0.0 {
            continue;
        }
        let w = 1.0 / (area[c] * area[c]);
        num += w * overlap[c];
        den += w * (area[c] + mass[c]);
    }
    Ok(if den > 0.0 { 1.0 - 2.0 * num / den } else { 0.0 })
}

/// `GDL / (1 + k (1 − GDL))`.
pub fn loss_g(gdl: f64, k: f64) -> f64 {
    gdl / (1.0 + k * (1.0 - gdl))
}

/// Mean over pixel-class entries of `−α' (1 − p')^γ ln p'`.
///
/// Entries only need to be probabilities; they need not sum to one per pixel.
pub fn focal_loss(probs: &BeliefMap, truth: &[usize], gamma: f64, alpha: f64) -> Result<f64> {
    check_labels(probs, truth)?;
    if probs.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("focal loss needs probabilities in [0, 1]"));
    }
    let mut total = 0.0;
    for (i, &t) in truth.iter().enumerate() {
        for (c, &p) in probs.pixel(i).iter().enumerate() {
            let (pt, at) = if c == t { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
            total -= at * (1.0 - pt).powf(gamma) * pt.max(LOG_FLOOR).ln();
        }
    }
    Ok(total / probs.data().len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub k: f64,
    pub gamma: f64,
    pub alpha_focal: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams { k: 0.75, gamma: 2.0, alpha_focal: 0.25 }
    }
}

/// Dice component plus focal component.
pub fn total_loss(probs: &BeliefMap, truth: &[usize], params: &LossParams) -> Result<f64> {
    let gdl = generalized_dice_loss(probs, truth)?;
    Ok(loss_g(gdl, params.k) + focal_loss(probs, truth, params.gamma, params.alpha_focal)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_hot(labels: &[usize], classes: usize) -> BeliefMap {
        let mut data = vec![0.0; labels.len() * classes];
        for (i, &l) in labels.iter().enumerate() {
            data[i * classes + l] = 1.0;
        }
        let mut m = BeliefMap::new(1, labels.len(), classes, data).unwrap();
        m.mark_simplex().unwrap();
        m
    }

    #[test]
    fn confusion_basics() {
        let truth = [0, 1, 1, 0];
        let perfect = confusion(&truth, &truth, 2).unwrap();
        assert_eq!(perfect.false_positives(0) + perfect.false_positives(1), 0);
        let flipped = confusion(&[1, 0, 0, 1], &truth, 2).unwrap();
        assert_eq!(flipped.true_positives(0) + flipped.true_positives(1), 0);
        let c = confusion(&[0, 1, 0, 0], &truth, 2).unwrap();
        assert_eq!((c.get(0, 0), c.get(0, 1), c.get(1, 0), c.get(1, 1)), (2, 1, 0, 1));
        assert_eq!(c.total(), 4);
        assert!(confusion(&[0, 1], &truth, 2).is_err());
        assert!(confusion(&[0, 2, 0, 0], &truth, 2).is_err());
    }

    #[test]
    fn iou_edge_cases() {
        let truth = [0, 1, 1, 0];
        assert_relative_eq!(iou(&confusion(&truth, &truth, 2).unwrap()), 0.5);
        assert_eq!(mean_iou(&confusion(&truth, &truth, 2).unwrap()), 1.0);
        assert_eq!(iou(&confusion(&[1, 0, 0, 1], &truth, 2).unwrap()), 0.0);
        assert_eq!(iou(&ConfusionCounts::new(3)), 0.0);
    }

    #[test]
    fn precision_recall_edges() {
        let truth = [0, 1, 2, 2];
        let c = confusion(&truth, &truth, 3).unwrap();
        assert_eq!(precision_recall(&c, 2), (1.0, 1.0));
        let c = confusion(&[0, 0, 0, 0], &truth, 3).unwrap();
        assert_eq!(precision_recall(&c, 1), (0.0, 0.0));
        let (p, r) = precision_recall_literal(&confusion(&[0, 1, 2, 0], &truth, 3).unwrap(), 0);
        assert_eq!((p, r), (1.0, 0.0));
    }

    #[test]
    fn dice_edges() {
        let truth = [0, 1, 1, 0];
        assert_eq!(generalized_dice_loss(&one_hot(&truth, 2), &truth).unwrap(), 0.0);
        assert_eq!(generalized_dice_loss(&one_hot(&[1, 0, 0, 1], 2), &truth).unwrap(), 1.0);
        let not_simplex = BeliefMap::new(1, 2, 2, vec![0.9, 0.9, 0.1, 0.1]).unwrap();
        assert!(generalized_dice_loss(&not_simplex, &[0, 1]).is_err());
    }

    #[test]
    fn loss_g_values() {
        assert_eq!(loss_g(0.0, 0.75), 0.0);
        assert_eq!(loss_g(1.0, 0.75), 1.0);
        assert_relative_eq!(loss_g(0.5, 0.75), 0.5 / 1.375);
        assert_relative_eq!(loss_g(0.5, 0.75), 0.3636, epsilon = 1e-4);
    }

    #[test]
    fn focal_values() {
        let truth = [0, 1];
        assert_eq!(focal_loss(&one_hot(&truth, 2), &truth, 2.0, 0.25).unwrap(), 0.0);
        let half = BeliefMap::new(1, 1, 1, vec![0.5]).unwrap();
        let f = focal_loss(&half, &[0], 2.0, 0.25).unwrap();
        assert_relative_eq!(f, -0.25 * 0.25 * 0.5f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(f, 0.04332, epsilon = 1e-5);
        // Confident and wrong stays finite thanks to the log floor.
        let wrong = one_hot(&[1, 0], 2);
        assert!(focal_loss(&wrong, &truth, 2.0, 0.25).unwrap().is_finite());
    }

    #[test]
    fn focal_decreases_as_prediction_improves() {
        let mut last = f64::INFINITY;
        for step in 1..=20 {
            let p = step as f64 / 20.0;
            let m = BeliefMap::new(1, 1, 2, vec![p, 1.0 - p]).unwrap();
            let f = focal_loss(&m, &[0], 2.0, 0.25).unwrap();
            assert!(f < last || (f == 0.0 && last == 0.0));
            last = f;
        }
    }

    #[test]
    fn total_is_sum_of_parts() {
        let truth = [0, 1, 1, 0];
        assert_eq!(total_loss(&one_hot(&truth, 2), &truth, &LossParams::default()).unwrap(), 0.0);
        let m = BeliefMap::new(2, 2, 2, vec![0.7, 0.3, 0.4, 0.6, 0.1, 0.9, 0.5, 0.5]).unwrap();
        let params = LossParams::default();
        let gdl = generalized_dice_loss(&m, &truth).unwrap();
        let focal = focal_loss(&m, &truth, params.gamma, params.alpha_focal).unwrap();
        assert_eq!(total_loss(&m, &truth, &params).unwrap(), loss_g(gdl, params.k) + focal);
    }
}
