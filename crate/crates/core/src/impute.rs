//! Inference: run a trained model over a whole series.

use rayon::prelude::*;

use crate::data::{make_windows, NormStats, TimeSeriesDataset};
use crate::error::{ImputeError, Result};
use crate::model::{BidirectionalOutput, ImputerModel};
use crate::quantile::{predictive_quantile, summarize_heads, VarianceMode};

/// Per-cell predictive distribution in normalized units, laid out `t * K + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Imputation {
    pub n_steps: usize,
    pub n_features: usize,
    /// Per-head imputations `v_{t,i}`.
    pub heads: Vec<Vec<f64>>,
    /// Aggregate mean; equals the input at observed cells.
    pub mean: Vec<f64>,
    /// Aggregate variance; zero at observed cells.
    pub var: Vec<f64>,
    pub variance_mode: VarianceMode,
}

/// Imputes `input` (normalized, mask = cells the model may read).
pub fn impute(
    model: &ImputerModel,
    input: &TimeSeriesDataset,
    window_length: usize,
    variance_mode: VarianceMode,
) -> Result<Imputation> {
    let k = input.n_features();
    if k != model.spec.n_features {
        return Err(ImputeError::Shape(format!(
            "model expects {} features, input has {k}",
            model.spec.n_features
        )));
    }
    let t_total = input.n_steps();
    let windows = make_windows(input, window_length);
    let outputs: Vec<Result<BidirectionalOutput>> =
        windows.par_iter().map(|w| model.impute_window(w)).collect();

    let n_heads = model.n_heads();
    let mut heads = vec![vec![0.0; t_total * k]; n_heads];
    for (w, out) in windows.iter().zip(outputs) {
        let out = out?;
        for (dst, src) in heads.iter_mut().zip(&out.heads) {
            dst[w.start * k..(w.start + w.len) * k].copy_from_slice(&src[..w.len * k]);
        }
    }

    let levels = &model.spec.levels;
    let mut mean = vec![0.0; t_total * k];
    let mut var = vec![0.0; t_total * k];
    let mut cell = vec![0.0; n_heads];
    for i in 0..t_total * k {
        if input.mask()[i] {
            mean[i] = input.values()[i];
            continue;
        }
        for (c, h) in cell.iter_mut().zip(&heads) {
            *c = h[i];
        }
        let (m, v) = summarize_heads(&cell, levels, variance_mode);
        mean[i] = m;
        var[i] = v;
    }
    Ok(Imputation {
        n_steps: t_total,
        n_features: k,
        heads,
        mean,
        var,
        variance_mode,
    })
}

impl Imputation {
    /// Predictive quantile `q` at every cell, normalized units.
    pub fn quantile(&self, q: f64) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(&m, &v)| predictive_quantile(m, v, q))
            .collect()
    }

    /// Filled series in raw units. Observed cells are copied from `raw`.
    pub fn filled_raw(&self, stats: &NormStats, raw: &TimeSeriesDataset) -> Vec<f64> {
        let den = stats.denormalize_matrix(&self.mean);
        den.into_iter()
            .enumerate()
            .map(|(i, v)| if raw.mask()[i] { raw.values()[i] } else { v })
            .collect()
    }
}
