//! Experiment configuration, read from a flat TOML document.
//!
//! Every key has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::{PoolingFeatures, PoolingOptions};
use crate::resources::CostModel;
use crate::sim::{ArrivalMode, BatchPolicy, SimConfig};
use crate::surrogate::{GprHyperparams, PriorMean};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_aps: usize,
    pub area_side: f64,
    pub lambda_max: Vec<f64>,
    pub k: Vec<usize>,
    pub seeds: Vec<u64>,
    pub shards_per_ap: usize,

    pub horizon_s: u32,
    pub local_period_s: u32,
    pub agg_period_s: u32,
    pub eval_period_s: u32,
    pub lr: f64,
    pub arrivals: ArrivalMode,
    /// Largest batch per local step; 0 trains on everything accrued.
    pub max_batch: usize,
    pub probe_size: usize,

    pub ru_per_unit_migrated: f64,
    pub ru_per_unit_processed: f64,
    pub ru_per_model_exchange: f64,
    pub ru_per_training_event: f64,
    pub overage_multiplier: f64,

    pub pooling_features: PoolingFeatures,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,

    pub gpr_length_scale: f64,
    pub gpr_signal_variance: f64,
    pub gpr_noise_variance: f64,

    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Evaluate on at most this many test samples; 0 uses all of them.
    pub test_limit: usize,
    pub output_dir: PathBuf,
    /// Worker threads for sweeps; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let cost = CostModel::default();
        let pooling = PoolingOptions::default();
        let gpr = GprHyperparams::default();
        Self {
            n_aps: 32,
            area_side: 1000.0,
            lambda_max: vec![1.0],
            k: vec![1, 2, 4, 8, 16, 32],
            seeds: vec![1, 2, 3, 4, 5],
            shards_per_ap: 2,
            horizon_s: sim.horizon_s,
            local_period_s: sim.local_period_s,
            agg_period_s: sim.agg_period_s,
            eval_period_s: sim.eval_period_s,
            lr: sim.lr,
            arrivals: sim.arrivals,
            max_batch: 0,
            probe_size: sim.probe_size,
            ru_per_unit_migrated: cost.ru_per_unit_migrated,
            ru_per_unit_processed: cost.ru_per_unit_processed,
            ru_per_model_exchange: cost.ru_per_model_exchange,
            ru_per_training_event: cost.ru_per_training_event,
            overage_multiplier: cost.overage_multiplier,
            pooling_features: pooling.features,
            kmeans_max_iter: pooling.max_iter,
            kmeans_tol: pooling.tol,
            gpr_length_scale: gpr.length_scales[0],
            gpr_signal_variance: gpr.signal_variance,
            gpr_noise_variance: gpr.noise_variance,
            train_images: "data/mnist/train-images-idx3-ubyte.gz".into(),
            train_labels: "data/mnist/train-labels-idx1-ubyte.gz".into(),
            test_images: "data/mnist/t10k-images-idx3-ubyte.gz".into(),
            test_labels: "data/mnist/t10k-labels-idx1-ubyte.gz".into(),
            test_limit: 0,
            output_dir: "out".into(),
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // dataset paths are relative to the config file
        if let Some(dir) = path.parent() {
            for p in [
                &mut cfg.train_images,
                &mut cfg.train_labels,
                &mut cfg.test_images,
                &mut cfg.test_labels,
            ] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Points the four dataset paths at the standard file names in `dir`.
    pub fn with_data_dir(mut self, dir: &Path) -> Self {
        self.train_images = dir.join("train-images-idx3-ubyte.gz");
        self.train_labels = dir.join("train-labels-idx1-ubyte.gz");
        self.test_images = dir.join("t10k-images-idx3-ubyte.gz");
        self.test_labels = dir.join("t10k-labels-idx1-ubyte.gz");
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks list non-emptiness and parameter ranges. Dataset files are
    /// checked when loaded.
    pub fn validate(&self) -> Result<()> {
        if self.lambda_max.is_empty() {
            return Err(Error::Config("lambda_max list is empty".into()));
        }
        if self.k.is_empty() {
            return Err(Error::Config("k list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds list is empty".into()));
        }
        if self.n_aps == 0 {
            return Err(Error::Config("n_aps must be at least 1".into()));
        }
        if let Some(k) = self.k.iter().find(|&&k| k == 0 || k > self.n_aps) {
            return Err(Error::Config(format!("k = {k} outside 1..={}", self.n_aps)));
        }
        if let Some(l) = self.lambda_max.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Config(format!("lambda_max = {l} must be positive")));
        }
        self.sim_config(0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.cost_model().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            horizon_s: self.horizon_s,
            local_period_s: self.local_period_s,
            agg_period_s: self.agg_period_s,
            lr: self.lr,
            arrivals: self.arrivals,
            batch: match self.max_batch {
                0 => BatchPolicy::AllAccrued,
                n => BatchPolicy::MaxSamples(n),
            },
            eval_period_s: self.eval_period_s,
            probe_size: self.probe_size,
            seed,
        }
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel {
            ru_per_unit_migrated: self.ru_per_unit_migrated,
            ru_per_unit_processed: self.ru_per_unit_processed,
            ru_per_model_exchange: self.ru_per_model_exchange,
            ru_per_training_event: self.ru_per_training_event,
            overage_multiplier: self.overage_multiplier,
        }
    }

    pub fn pooling_options(&self) -> PoolingOptions {
        PoolingOptions {
            features: self.pooling_features,
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
        }
    }

    pub fn gpr_hyperparams(&self) -> GprHyperparams {
        GprHyperparams {
            length_scales: vec![self.gpr_length_scale],
            signal_variance: self.gpr_signal_variance,
            noise_variance: self.gpr_noise_variance,
            standardize: true,
            prior_mean: PriorMean::TargetMean,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn parses_partial_document() {
        let cfg = ExperimentConfig::from_toml("k = [1, 32]\nhorizon_s = 100\narrivals = \"deterministic\"\n").unwrap();
        assert_eq!(cfg.k, vec![1, 32]);
        assert_eq!(cfg.horizon_s, 100);
        assert_eq!(cfg.arrivals, ArrivalMode::Deterministic);
        assert_eq!(cfg.n_aps, 32);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = ExperimentConfig::from_toml("horizon = 600\n").unwrap_err();
        assert!(err.to_string().contains("horizon"));
    }

    #[test]
    fn empty_lists_rejected() {
        let cfg = ExperimentConfig::from_toml("seeds = []\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_toml("k = [0]\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
