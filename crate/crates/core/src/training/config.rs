use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epochs without a validation improvement larger than `min_delta`
    /// before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 10_000,
            batch_size: 1000,
            lr: 5e-5,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            patience: 50,
            min_delta: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) || !(self.min_delta >= 0.0) {
            return Err(Error::Config("eps must be positive and min_delta non-negative".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("max_epochs".into(), self.max_epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("lr".into(), format!("{:?}", self.lr)),
            ("beta1".into(), format!("{:?}", self.beta1)),
            ("beta2".into(), format!("{:?}", self.beta2)),
            ("eps".into(), format!("{:?}", self.eps)),
            ("patience".into(), self.patience.to_string()),
            ("min_delta".into(), format!("{:?}", self.min_delta)),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    /// Applies recognised keys; others are ignored.
    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
        }
        for (key, val) in pairs {
            match key.as_str() {
                "max_epochs" => self.max_epochs = num(key, val)?,
                "batch_size" => self.batch_size = num(key, val)?,
                "lr" => self.lr = num(key, val)?,
                "beta1" => self.beta1 = num(key, val)?,
                "beta2" => self.beta2 = num(key, val)?,
                "eps" => self.eps = num(key, val)?,
                "patience" => self.patience = num(key, val)?,
                "min_delta" => self.min_delta = num(key, val)?,
                "seed" => self.seed = num(key, val)?,
                _ => {}
            }
        }
        Ok(())
    }
}
