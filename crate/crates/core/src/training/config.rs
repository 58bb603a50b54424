use serde::{Deserialize, Serialize};

use crate::error::{ImputeError, Result};
use crate::model::{Directions, EnsembleMode};
use crate::quantile::{QuantileLevels, VarianceMode};

/// Quantile levels given either as a preset name (`Q1`, `Q2`, `Q3`) or explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuantileSpec {
    Preset(String),
    Custom(Vec<f64>),
}

impl Default for QuantileSpec {
    fn default() -> Self {
        QuantileSpec::Preset("Q1".into())
    }
}

impl QuantileSpec {
    pub fn levels(&self) -> Result<QuantileLevels> {
        match self {
            QuantileSpec::Preset(name) => QuantileLevels::preset(name),
            QuantileSpec::Custom(v) => QuantileLevels::new(v.clone()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            QuantileSpec::Preset(name) => name.to_uppercase(),
            QuantileSpec::Custom(v) => format!("custom{}", v.len()),
        }
    }
}

/// Optimization and architecture settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub quantiles: QuantileSpec,
    pub ensemble_mode: EnsembleMode,
    pub lambda_consistency: f64,
    pub aux_nll_weight: f64,
    pub seed: u64,
    /// Hidden size; `None` means `max(K, 32)`.
    pub hidden: Option<usize>,
    pub window_length: usize,
    pub gradient_clip: f64,
    pub var_floor: f64,
    pub std_floor: f64,
    /// Apply the temporal decay factor; `false` forces `γ ≡ 1`.
    pub use_decay: bool,
    pub directions: Directions,
    pub variance_mode: VarianceMode,
    /// Stop when the held-out loss has not improved for this many epochs.
    pub early_stopping_patience: Option<usize>,
    /// Write a checkpoint every this many epochs (CLI only).
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            quantiles: QuantileSpec::default(),
            ensemble_mode: EnsembleMode::SharedTrunk,
            lambda_consistency: 0.1,
            aux_nll_weight: 0.0,
            seed: 0,
            hidden: None,
            window_length: 48,
            gradient_clip: 5.0,
            var_floor: 1e-6,
            std_floor: crate::data::DEFAULT_STD_FLOOR,
            use_decay: true,
            directions: Directions::Both,
            variance_mode: VarianceMode::HeadSpread,
            early_stopping_patience: None,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ImputeError::Config(m));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return fail(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1".into());
        }
        if self.window_length < 1 {
            return fail("window_length must be at least 1".into());
        }
        if self.lambda_consistency < 0.0 || self.aux_nll_weight < 0.0 {
            return fail("loss weights must be nonnegative".into());
        }
        if [self.var_floor, self.std_floor]
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return fail("var_floor and std_floor must be positive".into());
        }
        if self.hidden == Some(0) {
            return fail("hidden must be positive".into());
        }
        self.quantiles
            .levels()
            .map_err(|e| ImputeError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn hidden_size(&self, n_features: usize) -> usize {
        self.hidden.unwrap_or(n_features.max(32))
    }

    /// Short digest of the canonical serialized config.
    pub fn hash(&self) -> String {
        crate::io_util::digest(&serde_json::to_vec(self).expect("config serializes"))
    }
}
