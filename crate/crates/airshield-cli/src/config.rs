//! Experiment configuration: one TOML file drives every stage.
//!
//! Seeds cascade from `master_seed` through a fixed splitting function, so
//! changing one stage's behavior never perturbs another stage's randomness.
//! Explicit per-stage seeds in the file are honored when nonzero.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use airshield_core::adversary::AttackConfig;
use airshield_core::detector::DetectorHyper;
use airshield_core::emulator::SceneConfig;
use airshield_core::regressor::RegressorHyper;
use airshield_core::rng::derive_seed;
use airshield_gateway::GatewayConfig;

/// Stage tags for the seed cascade.
pub mod seed_tag {
    pub const EMULATE: u64 = 1;
    pub const REGRESSOR: u64 = 2;
    pub const ATTACK: u64 = 3;
    pub const ATTRIBUTION: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const DETECTOR: u64 = 6;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    /// Test rows held out for detector scoring and LLM evaluation.
    #[serde(default = "default_test_count")]
    pub test_count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_test_count() -> usize {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionConfig {
    /// Number of records attributed per run (seeded subsample).
    #[serde(default = "default_attribution_samples")]
    pub samples: usize,
    /// Background set size (seeded subsample of the clean data).
    #[serde(default = "default_background_size")]
    pub background_size: usize,
    /// Permutations for the sampling estimator (non-linear regressors).
    #[serde(default = "default_permutations")]
    pub n_permutations: usize,
}

fn default_attribution_samples() -> usize {
    2048
}

fn default_background_size() -> usize {
    512
}

fn default_permutations() -> usize {
    10_000
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            samples: default_attribution_samples(),
            background_size: default_background_size(),
            n_permutations: default_permutations(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub report_dir: PathBuf,
    pub scene: SceneConfig,
    pub regressor: RegressorHyper,
    pub attack: AttackConfig,
    pub split: SplitConfig,
    pub detector: DetectorHyper,
    #[serde(default)]
    pub attribution: AttributionConfig,
    #[serde(default)]
    pub gateway: Option<GatewayConfig>,
}

impl ExperimentConfig {
    /// Fills every zero per-stage seed from the master seed.
    pub fn cascade_seeds(&mut self) {
        if self.scene.rng_seed == 0 {
            self.scene.rng_seed = derive_seed(self.master_seed, seed_tag::EMULATE);
        }
        if self.regressor.seed == 0 {
            self.regressor.seed = derive_seed(self.master_seed, seed_tag::REGRESSOR);
        }
        if self.attack.seed == 0 {
            self.attack.seed = derive_seed(self.master_seed, seed_tag::ATTACK);
        }
        if self.split.seed == 0 {
            self.split.seed = derive_seed(self.master_seed, seed_tag::SPLIT);
        }
        if self.detector.seed == 0 {
            self.detector.seed = derive_seed(self.master_seed, seed_tag::DETECTOR);
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.scene.validate().map_err(|e| e.to_string())?;
        self.attack.validate().map_err(|e| e.to_string())?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err("split.train_fraction must be in (0, 1)".into());
        }
        if self.split.test_count < 1 {
            return Err("split.test_count must be >= 1".into());
        }
        if self.attribution.samples < 1 || self.attribution.background_size < 1 {
            return Err("attribution sample counts must be >= 1".into());
        }
        if let Some(gw) = &self.gateway {
            gw.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    /// Deterministic run id for transcript keying.
    pub fn run_id(&self) -> String {
        format!("run-{:016x}", self.master_seed)
    }

    /// Resolved-config snapshot for the report.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("# serialization error: {e}"))
    }
}
