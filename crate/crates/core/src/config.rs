//! Pipeline configuration, read from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dnn::TrainConfig;
use crate::error::{LpvError, Result};
use crate::lpv::GammaLayout;
use crate::model::{AnalyticBenchmarkModel, FactorizedModel, ParafoilModel, ParafoilParams};
use crate::pca::NormMode;
use crate::region::RegionMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Analytic,
    #[default]
    Parafoil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Overrides for the parafoil surrogate; ignored for other models.
    pub parafoil: ParafoilParams,
}

impl ModelConfig {
    pub fn build(&self) -> Box<dyn FactorizedModel> {
        match self.kind {
            ModelKind::Analytic => Box::new(AnalyticBenchmarkModel::new()),
            ModelKind::Parafoil => Box::new(ParafoilModel::new(self.parafoil.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Integration step, s (400 Hz by default).
    pub h: f64,
    /// Length of every scenario, s.
    pub duration: f64,
    pub random_scenarios: usize,
    /// Also fly the fixed maneuver set.
    pub maneuvers: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            h: 1.0 / 400.0,
            duration: 60.0,
            random_scenarios: 20,
            maneuvers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Points drawn from the trajectories, before the split.
    pub samples: usize,
    pub validation_fraction: f64,
    pub layout: GammaLayout,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            samples: 62_500,
            validation_fraction: 0.2,
            layout: GammaLayout::StateInput,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Intervals per axis when bounding the full scheduling region.
    pub grid_density: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { grid_density: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pca,
    Dnn,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Dnn => "dnn",
        }
    }

    pub fn producer(&self) -> &'static str {
        match self {
            Method::Pca => "reduce-pca",
            Method::Dnn => "reduce-dnn",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = LpvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Method::Pca),
            "dnn" => Ok(Method::Dnn),
            other => Err(LpvError::Config(format!("unknown method '{other}' (expected pca or dnn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    pub methods: Vec<Method>,
    pub normalizations: Vec<NormMode>,
    pub n_theta_hat: Vec<usize>,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Pca, Method::Dnn],
            normalizations: vec![NormMode::Std, NormMode::Minmax],
            n_theta_hat: (1..=10).collect(),
        }
    }
}

/// Network and optimizer settings; normalization, region and seed come from
/// the surrounding pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DnnConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hidden: Vec<usize>,
    pub bypass: bool,
    /// Cap on training samples (a seeded subset of the training split).
    pub max_train_samples: Option<usize>,
}

impl Default for DnnConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: 1e-3,
            batch_size: t.batch_size,
            epochs: t.epochs,
            l2: t.l2,
            patience: t.patience,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            hidden: t.hidden,
            bypass: false,
            max_train_samples: Some(20_000),
        }
    }
}

impl DnnConfig {
    pub fn train_config(&self, seed: u64, normalization: NormMode, region_method: RegionMethod) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            l2: self.l2,
            seed,
            patience: self.patience,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            hidden: self.hidden.clone(),
            bypass: self.bypass,
            normalization,
            region_method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub method: RegionMethod,
    pub mc_samples: usize,
    /// Conservatism ratios are computed up to this scheduling dimension.
    pub conservatism_max_dim: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            method: RegionMethod::Auto,
            mc_samples: 100_000,
            conservatism_max_dim: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub n_theta_hat: Vec<usize>,
    pub duration: f64,
    pub maneuver: String,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            n_theta_hat: vec![3, 5, 10],
            duration: 60.0,
            maneuver: "s_turn".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Base seed; every stage derives its own seed from it.
    pub seed: u64,
    pub deterministic: bool,
    /// Not part of the configuration hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub simulation: SimulationConfig,
    pub dataset: DatasetConfig,
    pub embedding: EmbeddingConfig,
    pub reduction: ReductionConfig,
    pub dnn: DnnConfig,
    pub region: RegionConfig,
    pub compare: CompareConfig,
}

/// Offsets added to the base seed for each consumer.
pub mod seeds {
    pub const SCENARIOS: u64 = 0;
    pub const MANEUVERS: u64 = 1;
    pub const SAMPLING: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const DNN: u64 = 4;
    pub const CONSERVATISM: u64 = 5;
    pub const COMPARE: u64 = 6;
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| LpvError::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| LpvError::Config(e.to_string()))
    }

    /// Reads `.json` files as JSON and everything else as TOML.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LpvError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seed_for(&self, offset: u64) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(offset)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(LpvError::Config(m));
        let sim = &self.simulation;
        if !(sim.h.is_finite() && sim.h > 0.0) || !(sim.duration >= sim.h) {
            return err(format!("simulation needs h > 0 and duration >= h (h={}, duration={})", sim.h, sim.duration));
        }
        if sim.random_scenarios == 0 && !sim.maneuvers {
            return err("simulation has no scenarios".into());
        }
        let ds = &self.dataset;
        if !(ds.validation_fraction > 0.0 && ds.validation_fraction < 1.0) {
            return err(format!("dataset.validation_fraction must be in (0, 1), got {}", ds.validation_fraction));
        }
        let n_val = (ds.samples as f64 * ds.validation_fraction).round() as usize;
        if n_val < 2 || ds.samples - n_val < 2 {
            return err(format!("dataset.samples = {} leaves too few points for both splits", ds.samples));
        }
        if self.embedding.grid_density < 2 {
            return err("embedding.grid_density must be at least 2".into());
        }
        let red = &self.reduction;
        if red.methods.is_empty() || red.normalizations.is_empty() || red.n_theta_hat.is_empty() {
            return err("reduction.methods, normalizations and n_theta_hat must be non-empty".into());
        }
        let n_theta = self.model.build().scheduling_entries().len();
        if let Some(&bad) = red.n_theta_hat.iter().find(|&&n| n == 0 || n > n_theta) {
            return err(format!("n_theta_hat = {bad} outside [1, {n_theta}] for this model"));
        }
        if red.methods.contains(&Method::Dnn) {
            self.dnn
                .train_config(0, NormMode::Std, self.region.method)
                .validate()?;
            if self.dnn.max_train_samples.is_some_and(|m| m < 2) {
                return err("dnn.max_train_samples must be at least 2".into());
            }
        }
        if self.region.mc_samples == 0 {
            return err("region.mc_samples must be positive".into());
        }
        if !(self.compare.duration >= sim.h) {
            return err("compare.duration must be at least one step".into());
        }
        crate::sim::InputSignal::maneuver(&self.compare.maneuver, &[], 1.0)
            .map_err(|e| LpvError::Config(format!("compare.maneuver: {e}")))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, without the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&serde_json::to_value(&c)?)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    /// A small configuration for the analytic benchmark, useful for smoke runs.
    pub fn analytic_smoke() -> Self {
        Self {
            model: ModelConfig {
                kind: ModelKind::Analytic,
                ..ModelConfig::default()
            },
            simulation: SimulationConfig {
                h: 0.01,
                duration: 20.0,
                random_scenarios: 8,
                maneuvers: false,
            },
            dataset: DatasetConfig {
                samples: 5_000,
                ..DatasetConfig::default()
            },
            reduction: ReductionConfig {
                methods: vec![Method::Pca],
                normalizations: vec![NormMode::Std],
                n_theta_hat: vec![1, 2],
            },
            compare: CompareConfig {
                n_theta_hat: vec![1, 2],
                duration: 10.0,
                maneuver: "left_turn".into(),
            },
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
        PipelineConfig::analytic_smoke().validate().unwrap();
    }

    #[test]
    fn toml_and_json_agree() {
        let toml = r#"
            seed = 4
            [model]
            kind = "analytic"
            [reduction]
            methods = ["pca"]
            normalizations = ["minmax"]
            n_theta_hat = [1, 2]
            [dnn]
            epochs = 5
        "#;
        let json = r#"{"seed": 4, "model": {"kind": "analytic"},
            "reduction": {"methods": ["pca"], "normalizations": ["minmax"], "n_theta_hat": [1, 2]},
            "dnn": {"epochs": 5}}"#;
        let a = PipelineConfig::from_toml_str(toml).unwrap();
        let b = PipelineConfig::from_json_str(json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.dnn.epochs, 5);
        assert_eq!(a.dnn.batch_size, 128);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml_str("[model]\nkindd = 'analytic'").is_err());
    }

    #[test]
    fn sweep_outside_range_rejected() {
        let mut c = PipelineConfig::analytic_smoke();
        c.reduction.n_theta_hat = vec![1, 4];
        assert!(matches!(c.validate(), Err(LpvError::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut c = PipelineConfig::analytic_smoke();
        let h = c.hash().unwrap();
        c.output_dir = Some("elsewhere".into());
        assert_eq!(c.hash().unwrap(), h);
        c.seed = 1;
        assert_ne!(c.hash().unwrap(), h);
    }
}
