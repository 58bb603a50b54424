//! Joint optimization of the imputer losses with Adam.

mod adam;
mod config;
mod gradcheck;
mod loss;

pub use adam::{clip_global_norm, OptimizerState};
pub use config::{QuantileSpec, TrainConfig};
pub use gradcheck::{grad_check, GradCheckReport, GroupReport};
pub use loss::{loss_and_grad, total_loss, LossComponents, LossWeights};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    fit_normalizer, make_windows, shuffled_batches, MaskSplit, NormStats, TimeSeriesDataset, Window,
};
use crate::error::{ImputeError, Result};
use crate::impute::impute;
use crate::model::{ImputerModel, ModelSpec};

/// Epoch-mean losses (per window) and the epoch's wall time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L_quantile")]
    pub l_quantile: f64,
    #[serde(rename = "L_consistency")]
    pub l_consistency: f64,
    #[serde(rename = "L_nll")]
    pub l_nll: f64,
    pub total: f64,
    pub wall_ms: u64,
}

/// A trained model with everything needed to impute new data.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: ImputerModel,
    pub stats: NormStats,
    pub config: TrainConfig,
    pub trajectory: Vec<EpochLog>,
    pub train_wall_ms: u64,
    pub stopped_early: bool,
}

impl LossWeights {
    pub fn from_config(c: &TrainConfig) -> Self {
        LossWeights {
            lambda_consistency: c.lambda_consistency,
            aux_nll_weight: c.aux_nll_weight,
            var_floor: c.var_floor,
        }
    }
}

/// Mean loss and mean gradient over a set of windows. The per-window work runs
/// in parallel; the reduction is sequential in window order.
pub fn batch_loss_and_grad(
    windows: &[&Window],
    model: &ImputerModel,
    weights: &LossWeights,
) -> Result<(LossComponents, Vec<f64>)> {
    let parts: Vec<Result<(LossComponents, Vec<f64>)>> = windows
        .par_iter()
        .map(|w| loss_and_grad(w, model, weights).map(|(l, g)| (l, g.flat())))
        .collect();
    let mut loss = LossComponents {
        empty_support: true,
        ..LossComponents::default()
    };
    let mut grad = vec![0.0; model.n_params()];
    for part in parts {
        let (l, g) = part?;
        loss.accumulate(&l);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let s = 1.0 / windows.len().max(1) as f64;
    loss.scale(s);
    grad.iter_mut().for_each(|g| *g *= s);
    Ok((loss, grad))
}

/// Splits off a seeded 10% of the training cells for early stopping.
fn holdout_cells(train_mask: &[bool], seed: u64) -> (Vec<bool>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed0_fe57);
    let mut fit = train_mask.to_vec();
    let mut held = vec![false; train_mask.len()];
    for (i, &m) in train_mask.iter().enumerate() {
        if m && rng.gen::<f64>() < 0.1 {
            fit[i] = false;
            held[i] = true;
        }
    }
    (fit, held)
}

/// Trains on the `train_mask` cells of `split`; held-out cells are invisible.
pub fn train(
    dataset: &TimeSeriesDataset,
    split: &MaskSplit,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    train_with_callback(dataset, split, config, |_, _, _| Ok(()))
}

/// [`train`] with a hook invoked after every epoch.
pub fn train_with_callback(
    dataset: &TimeSeriesDataset,
    split: &MaskSplit,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &ImputerModel, &NormStats) -> Result<()>,
) -> Result<TrainedModel> {
    config.validate()?;
    if split.train_mask.len() != dataset.mask().len() {
        return Err(ImputeError::Shape("split does not match dataset".into()));
    }
    let started = Instant::now();
    let (fit_mask, held_mask) = match config.early_stopping_patience {
        Some(_) => holdout_cells(&split.train_mask, config.seed),
        None => (
            split.train_mask.clone(),
            vec![false; split.train_mask.len()],
        ),
    };
    let visible = dataset.with_mask(&fit_mask)?;
    let stats = fit_normalizer(&visible, config.std_floor)?;
    let normalized = stats.normalize(&visible)?;
    let windows = make_windows(&normalized, config.window_length);

    let levels = config.quantiles.levels()?;
    let spec = ModelSpec {
        n_features: dataset.n_features(),
        hidden: config.hidden_size(dataset.n_features()),
        levels,
        mode: config.ensemble_mode,
        use_decay: config.use_decay,
        directions: config.directions,
    };
    let mut model = ImputerModel::init(spec, config.seed);
    let weights = LossWeights::from_config(config);
    let mut opt = OptimizerState::new(model.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut trajectory = Vec::with_capacity(config.epochs);

    let held_dataset = dataset.with_mask(&held_mask)?;
    let mut best: Option<(f64, ImputerModel)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let epoch_start = Instant::now();
        let mut sum = LossComponents::default();
        let mut n_windows = 0usize;
        for batch in shuffled_batches(windows.len(), config.batch_size, &mut rng) {
            let refs: Vec<&Window> = batch.iter().map(|&i| &windows[i]).collect();
            let (loss, mut grad) = match batch_loss_and_grad(&refs, &model, &weights) {
                Ok(v) => v,
                Err(ImputeError::NonFinite { .. } | ImputeError::NonFiniteLoss(_)) => {
                    return Err(ImputeError::Diverged {
                        epoch,
                        loss: f64::NAN,
                        trajectory,
                    })
                }
                Err(e) => return Err(e),
            };
            clip_global_norm(&mut grad, config.gradient_clip);
            let mut flat = model.flat();
            opt.update(&mut flat, &grad, config.learning_rate);
            model.set_flat(&flat);
            let mut weighted = loss;
            weighted.scale(refs.len() as f64);
            sum.accumulate(&weighted);
            n_windows += refs.len();
        }
        sum.scale(1.0 / n_windows.max(1) as f64);
        let log = EpochLog {
            epoch,
            l1: sum.l1,
            l2: sum.l2,
            l_quantile: sum.quantile,
            l_consistency: sum.consistency,
            l_nll: sum.nll,
            total: sum.total,
            wall_ms: epoch_start.elapsed().as_millis() as u64,
        };
        let diverged = !log.total.is_finite()
            || log.total > 1e6
            || !model
                .members
                .iter()
                .all(|m| m.forward.is_finite() && m.backward.is_finite());
        trajectory.push(log.clone());
        if diverged {
            return Err(ImputeError::Diverged {
                epoch,
                loss: log.total,
                trajectory,
            });
        }
        on_epoch(&log, &model, &stats)?;

        if let Some(patience) = config.early_stopping_patience {
            let score = holdout_mae(&model, &stats, &normalized, &held_dataset, config)?;
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some((_, m)) = best {
        model = m;
    }
    Ok(TrainedModel {
        model,
        stats,
        config: config.clone(),
        trajectory,
        train_wall_ms: started.elapsed().as_millis() as u64,
        stopped_early,
    })
}

fn holdout_mae(
    model: &ImputerModel,
    stats: &NormStats,
    input: &TimeSeriesDataset,
    held: &TimeSeriesDataset,
    config: &TrainConfig,
) -> Result<f64> {
    if held.n_observed() == 0 {
        return Ok(0.0);
    }
    let imp = impute(model, input, config.window_length, config.variance_mode)?;
    let mut err = 0.0;
    for (i, &m) in held.mask().iter().enumerate() {
        if m {
            let k = i % held.n_features();
            err += (imp.mean[i] - stats.normalize_value(k, held.values()[i])).abs();
        }
    }
    Ok(err / held.n_observed() as f64)
}
