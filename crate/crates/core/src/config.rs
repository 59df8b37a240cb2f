//! Run configuration: a flat JSON object. Unknown keys are rejected and
//! every omitted key takes the default listed on [`RunConfig::default`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Activation, AdamConfig};

pub const RANK_GRID: [usize; 6] = [2, 4, 8, 16, 32, 64];
pub const GAMMA_GRID: [f64; 6] = [50.0, 100.0, 500.0, 1000.0, 5000.0, 10000.0];
pub const LAMBDA_GRID: [f64; 7] = [0.0, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1];
pub const EPOCH_GRID: [usize; 4] = [5, 10, 15, 20];
pub const LEARNING_RATE_GRID: [f64; 5] = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5];
pub const L2_GRID: [f64; 5] = [0.0, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReuseMode {
    /// Re-initialize the model and train `rewind_epoch` epochs.
    Fresh,
    /// Restore the stage-1 model after `rewind_epoch` epochs and train the rest.
    Rewind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub rank: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// `P`
    pub epochs: usize,
    /// `P_c`
    pub rewind_epoch: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Learning rate for the reuse stage; falls back to `learning_rate`.
    pub reuse_learning_rate: Option<f64>,
    pub reuse_l2: Option<f64>,
    pub batch_size: usize,
    pub activation: Activation,
    pub selector_hidden: Vec<usize>,
    pub head_bias_init: f64,
    pub reuse_mode: ReuseMode,
    /// Stage-1 epoch whose selector drives reuse; defaults to the last.
    pub selector_epoch: Option<usize>,
    pub no_selection: bool,
    pub random_selection: bool,
    pub random_selection_prob: f64,
    pub no_reuse: bool,
    pub no_discretize: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub data: Option<String>,
    pub min_frequency: usize,
    pub split_ratios: [f64; 3],
    pub split_seed: u64,
    /// Accept hyperparameters outside the searched grids.
    pub allow_off_grid: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            embedding_dim: 16,
            hidden_dim: 64,
            rank: 8,
            gamma: 100.0,
            lambda: 1e-3,
            epochs: 10,
            rewind_epoch: 5,
            learning_rate: 1e-3,
            l2: 1e-6,
            reuse_learning_rate: None,
            reuse_l2: None,
            batch_size: 4096,
            activation: Activation::Relu,
            selector_hidden: vec![64, 32],
            head_bias_init: -0.5,
            reuse_mode: ReuseMode::Fresh,
            selector_epoch: None,
            no_selection: false,
            random_selection: false,
            random_selection_prob: 0.5,
            no_reuse: false,
            no_discretize: false,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            data: None,
            min_frequency: 2,
            split_ratios: [0.8, 0.1, 0.1],
            split_seed: 0,
            allow_off_grid: false,
        }
    }
}

fn on_grid(value: f64, grid: &[f64]) -> bool {
    grid.iter().any(|&g| (g - value).abs() <= 1e-12 * g.abs().max(1.0))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.embedding_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 {
            return bad("embedding_dim, hidden_dim and batch_size must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.gamma >= 1.0) {
            return bad(format!("gamma must be >= 1, got {}", self.gamma));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !self.no_reuse && (self.rewind_epoch < 1 || self.rewind_epoch >= self.epochs) {
            return bad(format!(
                "rewind_epoch must lie in [1, epochs - 1] = [1, {}], got {}",
                self.epochs.saturating_sub(1),
                self.rewind_epoch
            ));
        }
        if let Some(e) = self.selector_epoch {
            if e < 1 || e > self.epochs {
                return bad(format!("selector_epoch must lie in [1, {}], got {e}", self.epochs));
            }
        }
        if self.no_selection && self.random_selection {
            return bad("no_selection and random_selection are mutually exclusive".into());
        }
        if !(0.0..=1.0).contains(&self.random_selection_prob) {
            return bad(format!(
                "random_selection_prob must lie in [0, 1], got {}",
                self.random_selection_prob
            ));
        }
        if self.min_frequency == 0 {
            return bad("min_frequency must be >= 1".into());
        }
        self.adam(false).validate()?;
        self.adam(true).validate()?;
        crate::data::SplitSpec::new(self.split_ratios, self.split_seed).validate()?;
        if self.allow_off_grid {
            return Ok(());
        }
        let off = |name: &str, value: String| {
            Err(Error::Config(format!(
                "{name} = {value} is outside the searched grid (set allow_off_grid to override)"
            )))
        };
        if !RANK_GRID.contains(&self.rank) {
            return off("rank", self.rank.to_string());
        }
        if !on_grid(self.gamma, &GAMMA_GRID) {
            return off("gamma", self.gamma.to_string());
        }
        if !on_grid(self.lambda, &LAMBDA_GRID) {
            return off("lambda", self.lambda.to_string());
        }
        if !EPOCH_GRID.contains(&self.epochs) {
            return off("epochs", self.epochs.to_string());
        }
        for (name, lr) in [
            ("learning_rate", Some(self.learning_rate)),
            ("reuse_learning_rate", self.reuse_learning_rate),
        ] {
            if let Some(lr) = lr.filter(|&lr| !on_grid(lr, &LEARNING_RATE_GRID)) {
                return off(name, lr.to_string());
            }
        }
        for (name, l2) in [("l2", Some(self.l2)), ("reuse_l2", self.reuse_l2)] {
            if let Some(l2) = l2.filter(|&l2| !on_grid(l2, &L2_GRID)) {
                return off(name, l2.to_string());
            }
        }
        Ok(())
    }

    /// Optimizer settings for stage 1 (`reuse = false`) or the reuse stage.
    pub fn adam(&self, reuse: bool) -> AdamConfig {
        let (lr, l2) = if reuse {
            (
                self.reuse_learning_rate.unwrap_or(self.learning_rate),
                self.reuse_l2.unwrap_or(self.l2),
            )
        } else {
            (self.learning_rate, self.l2)
        };
        AdamConfig {
            learning_rate: lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            l2_coefficient: l2,
        }
    }

    /// Stage-1 epoch whose selector is frozen for reuse.
    pub fn selector_epoch(&self) -> usize {
        self.selector_epoch.unwrap_or(self.epochs)
    }

    /// Whether the learned selector is in use (not replaced by an ablation).
    pub fn uses_selector(&self) -> bool {
        !self.no_selection && !self.random_selection
    }
}
