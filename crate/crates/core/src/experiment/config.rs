use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crf::{CompatibilityWeights, CrfConfig};
use crate::error::{Error, Result};
use crate::shapes::NUM_LABELS;
use crate::som::{SomMode, SomStepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Initial beliefs held fixed; stands in for the feed-forward network.
    Identity,
    Som,
    Crf,
    Hopfield,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Identity, Model::Som, Model::Crf, Model::Hopfield];

    pub fn name(self) -> &'static str {
        match self {
            Model::Identity => "identity",
            Model::Som => "som",
            Model::Crf => "crf",
            Model::Hopfield => "hopfield",
        }
    }

    pub fn parse(s: &str) -> Option<Model> {
        Model::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Synthetic backbone: logits `a·onehot + N(0, b·ε/100)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitParams {
    pub a: f64,
    pub b: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        InitParams { a: 4.0, b: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SomParams {
    pub alpha: f64,
    pub mode: SomMode,
    pub include_disconnected: bool,
    /// Edge threshold as a fraction of the filter response range.
    pub edge_fraction: f64,
}

impl Default for SomParams {
    fn default() -> Self {
        SomParams { alpha: 0.1, mode: SomMode::Uniform, include_disconnected: false, edge_fraction: 0.1 }
    }
}

impl SomParams {
    pub fn step_config(&self) -> SomStepConfig {
        SomStepConfig { alpha: self.alpha, mode: self.mode, include_disconnected: self.include_disconnected }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfParams {
    pub alpha: f64,
    pub project_simplex: bool,
    /// Compatibility matrix rows; identity when absent.
    pub weights: Option<Vec<Vec<f64>>>,
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams { alpha: 0.1, project_simplex: true, weights: None }
    }
}

impl CrfParams {
    pub fn step_config(&self) -> CrfConfig {
        CrfConfig { alpha: self.alpha, project_simplex: self.project_simplex, iterations: 0 }
    }

    pub fn compatibility(&self, classes: usize) -> Result<CompatibilityWeights> {
        match &self.weights {
            None => Ok(CompatibilityWeights::identity(classes)),
            Some(rows) => {
                let w = CompatibilityWeights::from_rows(rows)?;
                if w.classes() != classes {
                    return Err(Error::Config(format!(
                        "crf.weights is {0}x{0}, expected {classes}x{classes}",
                        w.classes()
                    )));
                }
                Ok(w)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopfieldParams {
    pub alpha: f64,
    /// Patch side `P`.
    pub patch: usize,
    /// Number of memories `I1`.
    pub memories: usize,
    pub beta: f64,
}

impl Default for HopfieldParams {
    fn default() -> Self {
        HopfieldParams { alpha: 0.1, patch: 4, memories: 64, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotParams {
    /// Fill color per model name.
    pub colors: BTreeMap<String, String>,
}

impl Default for PlotParams {
    fn default() -> Self {
        let colors = [("identity", "#7f7f7f"), ("som", "#1f77b4"), ("crf", "#ff7f0e"), ("hopfield", "#2ca02c")]
            .into_iter()
            .map(|(m, c)| (m.to_string(), c.to_string()))
            .collect();
        PlotParams { colors }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub test_size: usize,
    /// Training instances for Hopfield memories in the noise sweep.
    pub train_size: usize,
    /// Independent repetitions per cell.
    pub seeds: usize,
    pub noise_levels: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    /// Noise level held fixed during the sample-size sweep.
    pub sample_sweep_noise: f64,
    pub checkpoints: Vec<usize>,
    pub models: Vec<Model>,
    /// Report hits-over-misses precision and recall instead of the usual ratios.
    pub literal_metrics: bool,
    pub init: InitParams,
    pub som: SomParams,
    pub crf: CrfParams,
    pub hopfield: HopfieldParams,
    pub plot: PlotParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            height: 64,
            width: 64,
            test_size: 200,
            train_size: 40,
            seeds: 5,
            noise_levels: (1..=10).map(|k| 10.0 * k as f64).collect(),
            sample_sizes: vec![10, 20, 40, 80, 160, 320],
            sample_sweep_noise: 50.0,
            checkpoints: vec![0, 20, 40, 60],
            models: Model::ALL.to_vec(),
            literal_metrics: false,
            init: InitParams::default(),
            som: SomParams::default(),
            crf: CrfParams::default(),
            hopfield: HopfieldParams::default(),
            plot: PlotParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn classes(&self) -> usize {
        NUM_LABELS
    }

    /// Checkpoints in ascending order without repeats.
    pub fn sorted_checkpoints(&self) -> Vec<usize> {
        let mut c = self.checkpoints.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.height < 16 || self.width < 16 {
            return fail(format!("image size must be at least 16x16, got {}x{}", self.height, self.width));
        }
        if self.test_size == 0 || self.train_size == 0 {
            return fail("test_size and train_size must be positive".into());
        }
        if self.seeds == 0 {
            return fail("seeds must be at least 1".into());
        }
        if self.noise_levels.is_empty()
            || self.sample_sizes.is_empty()
            || self.checkpoints.is_empty()
            || self.models.is_empty()
        {
            return fail("noise_levels, sample_sizes, checkpoints and models must be nonempty".into());
        }
        if self.noise_levels.iter().chain([&self.sample_sweep_noise]).any(|e| !(e.is_finite() && *e >= 0.0)) {
            return fail("noise levels must be finite and nonnegative".into());
        }
        if self.sample_sizes.contains(&0) {
            return fail("sample sizes must be positive".into());
        }
        let mut models = self.models.clone();
        models.sort();
        models.dedup();
        if models.len() != self.models.len() {
            return fail("models must not repeat".into());
        }
        if !(self.init.a.is_finite() && self.init.a >= 0.0 && self.init.b.is_finite() && self.init.b >= 0.0) {
            return fail(format!("init.a and init.b must be nonnegative, got {} and {}", self.init.a, self.init.b));
        }
        self.som.step_config().validate().map_err(|e| Error::Config(format!("som: {e}")))?;
        if !(self.som.edge_fraction.is_finite() && self.som.edge_fraction >= 0.0) {
            return fail(format!("som.edge_fraction must be nonnegative, got {}", self.som.edge_fraction));
        }
        self.crf.step_config().validate().map_err(|e| Error::Config(format!("crf: {e}")))?;
        self.crf.compatibility(self.classes())?;
        let h = &self.hopfield;
        if !(h.alpha > 0.0 && h.alpha <= 1.0) {
            return fail(format!("hopfield.alpha must lie in (0, 1], got {}", h.alpha));
        }
        if h.patch == 0 || h.memories == 0 {
            return fail("hopfield.patch and hopfield.memories must be positive".into());
        }
        if !(h.beta.is_finite() && h.beta > 0.0) {
            return fail(format!("hopfield.beta must be positive, got {}", h.beta));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml("seeds = 2\n[som]\nalpha = 0.3\nmode = \"response\"\n").unwrap();
        assert_eq!(cfg.seeds, 2);
        assert_eq!(cfg.som.alpha, 0.3);
        assert_eq!(cfg.som.mode, SomMode::Response);
        assert_eq!(cfg.test_size, 200);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("sedes = 2\n"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("[som]\nbeta = 1.0\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "seeds = 0",
            "noise_levels = []",
            "checkpoints = []",
            "models = [\"som\", \"som\"]",
            "[hopfield]\nalpha = 0.0",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
