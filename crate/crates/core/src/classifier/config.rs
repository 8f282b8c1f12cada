use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain stochastic gradient descent.
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Convolution window heights in rows.
    pub filter_widths: Vec<usize>,
    /// Total filters, split evenly across widths.
    pub filters: usize,
    pub dense_units: usize,
    pub classes: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Dropout keep probability after pooling.
    pub keep_prob: f64,
    pub optimizer: Optimizer,
    /// Mean batch loss above which training is declared diverged.
    pub max_loss: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            filter_widths: vec![2, 3, 4, 5],
            filters: 1024,
            dense_units: 256,
            classes: 15,
            learning_rate: 1e-4,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            keep_prob: 0.5,
            optimizer: Optimizer::default(),
            max_loss: 1e4,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return bad("filter widths must be nonempty and positive");
        }
        if self.filters == 0 || !self.filters.is_multiple_of(self.filter_widths.len()) {
            return bad("filter count must be a positive multiple of the number of widths");
        }
        if self.dense_units == 0 {
            return bad("dense layer needs at least one unit");
        }
        if self.classes < 2 {
            return bad("at least two classes are required");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad("keep probability must lie in (0, 1]");
        }
        if !(self.max_loss > 0.0) {
            return bad("max_loss must be positive");
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return bad("Adam hyperparameters out of range");
            }
        }
        Ok(())
    }

    pub fn filters_per_width(&self) -> usize {
        self.filters / self.filter_widths.len()
    }

    pub fn max_width(&self) -> usize {
        self.filter_widths.iter().copied().max().unwrap_or(1)
    }
}
