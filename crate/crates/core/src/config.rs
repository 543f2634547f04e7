//! Run configuration, loaded from JSON. Unknown keys are rejected so typos
//! fail loudly instead of silently falling back to defaults.

use serde::{Deserialize, Serialize};

use crate::dataset::{Feature, DEFAULT_ZERO_FRACTION};
use crate::error::{Error, Result};
use crate::evaluation::MetricSpace;
use crate::models::{ModelKind, DEFAULT_DENSE_HIDDEN, DEFAULT_GCN_HIDDEN};
use crate::training::{AdamConfig, TrainConfig};
use crate::windowing::{DEFAULT_HORIZON, DEFAULT_WINDOW};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub window_size: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Base seed; each product adds a stable hash of its code.
    pub seed: u64,
    pub shuffle_seed: u64,
    pub shuffle: bool,
    pub select_best_val: bool,
    pub random_split: bool,
    pub features: Vec<Feature>,
    pub target: Feature,
    pub zero_fraction_threshold: f64,
    pub mlp_hidden: Vec<usize>,
    pub gnn_hidden: Vec<usize>,
    pub gcn_hidden: Vec<usize>,
    pub metric_space: MetricSpace,
    pub models: Vec<ModelKind>,
    /// Restrict the benchmark to these product codes.
    pub products: Option<Vec<String>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            window_size: DEFAULT_WINDOW,
            horizon: DEFAULT_HORIZON,
            epochs: 50,
            batch_size: 16,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 0,
            shuffle_seed: 0,
            shuffle: true,
            select_best_val: false,
            random_split: false,
            features: Feature::ALL.to_vec(),
            target: Feature::SalesOrder,
            zero_fraction_threshold: DEFAULT_ZERO_FRACTION,
            mlp_hidden: DEFAULT_DENSE_HIDDEN.to_vec(),
            gnn_hidden: DEFAULT_DENSE_HIDDEN.to_vec(),
            gcn_hidden: DEFAULT_GCN_HIDDEN.to_vec(),
            metric_space: MetricSpace::Normalized,
            models: ModelKind::ALL.to_vec(),
            products: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.horizon == 0 {
            return Err(Error::Config("window_size and horizon must be at least 1".into()));
        }
        if self.features.is_empty() {
            return Err(Error::Config("at least one feature is required".into()));
        }
        if !self.features.contains(&self.target) {
            return Err(Error::Config(format!("target {} is not among the features", self.target)));
        }
        if !matches!(self.target, Feature::SalesOrder | Feature::Production) {
            return Err(Error::Config("target must be SalesOrder or Production".into()));
        }
        let mut seen = self.features.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.features.len() {
            return Err(Error::Config("duplicate feature".into()));
        }
        if !(0.0..=1.0).contains(&self.zero_fraction_threshold) {
            return Err(Error::Config("zero_fraction_threshold must lie in [0,1]".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        for k in ModelKind::ALL {
            if self.hidden(k).contains(&0) {
                return Err(Error::Config(format!("{k} hidden widths must be positive")));
            }
        }
        self.train_config(0).validate()
    }

    pub fn hidden(&self, kind: ModelKind) -> &[usize] {
        match kind {
            ModelKind::Mlp => &self.mlp_hidden,
            ModelKind::IdentityGnn => &self.gnn_hidden,
            ModelKind::Gcn => &self.gcn_hidden,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    /// Training settings with the given initialization seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam(),
            seed,
            shuffle_seed: self.shuffle_seed.wrapping_add(seed),
            shuffle: self.shuffle,
            select_best_val: self.select_best_val,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(RunConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn partial_override() {
        let cfg = RunConfig::from_json(r#"{"epochs": 3, "models": ["GCN"], "metric_space": "raw-units"}"#).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.models, vec![ModelKind::Gcn]);
        assert_eq!(cfg.metric_space, MetricSpace::RawUnits);
        assert_eq!(cfg.batch_size, 16);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_json(r#"{"epoch": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"window_size": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"target": "Delivery"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"features": ["Production"]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"lr": -1.0}"#).is_err());
        assert!(RunConfig::from_json("[").is_err());
    }

    #[test]
    fn long_float_survives_roundtrip() {
        let cfg = RunConfig::from_json(r#"{"lr": 45555555555555555555555555555555555555555555555555555555555}"#).unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
