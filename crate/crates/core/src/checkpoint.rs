//! JSON checkpoints.
//!
//! Layout: format tag, shapes, seed, config hash, the training config, the
//! normalizer, then every tensor as `{name, values}` in the order of
//! [`ImputerModel::tensors`]: members in order, forward before backward, and
//! within a direction `w_x, b_x, w_gamma_raw, b_gamma, w_z, b_z`, each head's
//! `w_beta, b_beta`, then `lstm.w_ih, lstm.w_hh, lstm.bias`.
//! Floats are written with round-trip precision, so a reload is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{ImputeError, Result};
use crate::io_util::write_atomic;
use crate::model::{ImputerModel, ModelSpec};
use crate::training::{TrainConfig, TrainedModel};

pub const FORMAT: &str = "qsimpute-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shapes {
    pub n_features: usize,
    pub hidden: usize,
    pub n_members: usize,
    pub n_heads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub shapes: Shapes,
    pub seed: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub norm_stats: NormStats,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &ImputerModel, stats: &NormStats, config: &TrainConfig) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            shapes: Shapes {
                n_features: model.spec.n_features,
                hidden: model.spec.hidden,
                n_members: model.members.len(),
                n_heads: model.n_heads(),
            },
            seed: config.seed,
            config_hash: config.hash(),
            config: config.clone(),
            norm_stats: stats.clone(),
            tensors: model
                .tensors()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    values: t.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_trained(trained: &TrainedModel) -> Self {
        Self::from_model(&trained.model, &trained.stats, &trained.config)
    }

    /// Rebuilds the model, checking every tensor name and length.
    pub fn model(&self) -> Result<ImputerModel> {
        if self.format != FORMAT {
            return Err(ImputeError::Checkpoint(format!(
                "unknown format {:?}",
                self.format
            )));
        }
        if self.config.hash() != self.config_hash {
            return Err(ImputeError::Checkpoint(
                "config hash does not match config".into(),
            ));
        }
        let spec = ModelSpec {
            n_features: self.shapes.n_features,
            hidden: self.config.hidden_size(self.shapes.n_features),
            levels: self.config.quantiles.levels()?,
            mode: self.config.ensemble_mode,
            use_decay: self.config.use_decay,
            directions: self.config.directions,
        };
        if spec.hidden != self.shapes.hidden {
            return Err(ImputeError::Checkpoint(
                "hidden size does not match config".into(),
            ));
        }
        let mut model = ImputerModel::init(spec, self.seed);
        let expected: Vec<(String, usize)> = model
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.len()))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(ImputeError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, len), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || *len != t.values.len() {
                return Err(ImputeError::Checkpoint(format!(
                    "tensor {} ({} values) where {name} ({len} values) was expected",
                    t.name,
                    t.values.len()
                )));
            }
        }
        for (dst, t) in model.tensors_mut().into_iter().zip(&self.tensors) {
            dst.copy_from_slice(&t.values);
        }
        if self.norm_stats.mean.len() != self.shapes.n_features {
            return Err(ImputeError::Checkpoint(
                "normalizer width does not match".into(),
            ));
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| ImputeError::io(path, e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| ImputeError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Directions, EnsembleMode};
    use crate::quantile::QuantileLevels;

    #[test]
    fn round_trip_is_bit_exact() {
        let config = TrainConfig {
            hidden: Some(5),
            ensemble_mode: EnsembleMode::FullEnsemble,
            seed: 9,
            ..TrainConfig::default()
        };
        let spec = ModelSpec {
            n_features: 3,
            hidden: 5,
            levels: QuantileLevels::q1(),
            mode: EnsembleMode::FullEnsemble,
            use_decay: true,
            directions: Directions::Both,
        };
        let mut model = ImputerModel::init(spec, 9);
        let mut flat = model.flat();
        flat[3] = 0.1 + 0.2;
        flat[7] = -1.0 / 3.0;
        model.set_flat(&flat);
        let stats = NormStats {
            mean: vec![0.1, 2.0 / 3.0, -5.0],
            std: vec![1.0, 1e-5, 7.25],
        };
        let ck = Checkpoint::from_model(&model, &stats, &config);
        let back: Checkpoint = serde_json::from_slice(&ck.to_bytes()).unwrap();
        let rebuilt = back.model().unwrap();
        let a: Vec<u64> = model.flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = rebuilt.flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.norm_stats, stats);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn tampered_tensor_rejected() {
        let config = TrainConfig {
            hidden: Some(4),
            ..TrainConfig::default()
        };
        let spec = ModelSpec {
            n_features: 2,
            hidden: 4,
            levels: QuantileLevels::q1(),
            mode: EnsembleMode::SharedTrunk,
            use_decay: true,
            directions: Directions::Both,
        };
        let model = ImputerModel::init(spec, 0);
        let stats = NormStats {
            mean: vec![0.0; 2],
            std: vec![1.0; 2],
        };
        let mut ck = Checkpoint::from_model(&model, &stats, &config);
        ck.tensors[2].values.pop();
        assert!(matches!(ck.model(), Err(ImputeError::Checkpoint(_))));
    }
}
