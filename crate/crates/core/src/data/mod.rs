//! Dataset container, time-gap matrix, normalization and MCAR hold-out splits.

mod csv_io;
mod window;

pub(crate) use csv_io::format_number;
pub use csv_io::{load_csv, load_csv_with, write_matrix_csv, CsvOptions};
pub use window::{batch_iter, make_windows, shuffled_batches, Window};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ImputeError, Result};

/// Floor applied to per-feature standard deviations.
pub const DEFAULT_STD_FLOOR: f64 = 1e-5;

/// Metadata collected while loading a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadMeta {
    /// Rows were not in ascending timestamp order and have been sorted.
    pub resorted: bool,
    /// Rows dropped because their timestamp repeated an earlier row.
    pub duplicates_dropped: usize,
    /// Header of the time column, `None` when timestamps are row indices.
    pub time_column: Option<String>,
}

/// Multivariate series with an observation mask, stored row-major (`T × K`).
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    values: Vec<f64>,
    mask: Vec<bool>,
    timestamps: Vec<f64>,
    feature_names: Vec<String>,
    pub meta: LoadMeta,
}

impl TimeSeriesDataset {
    /// Builds a dataset, zeroing the sentinel at unobserved cells.
    pub fn new(
        values: Vec<f64>,
        mask: Vec<bool>,
        timestamps: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let t = timestamps.len();
        let k = feature_names.len();
        if t == 0 {
            return Err(ImputeError::ZeroRows);
        }
        if k == 0 {
            return Err(ImputeError::ZeroFeatures);
        }
        if values.len() != t * k || mask.len() != t * k {
            return Err(ImputeError::Shape(format!(
                "expected {} cells for T={t}, K={k}; got values={} mask={}",
                t * k,
                values.len(),
                mask.len()
            )));
        }
        if timestamps
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(ImputeError::InvalidArgument(
                "timestamps must be strictly increasing".into(),
            ));
        }
        let mut values = values;
        for (i, (v, &m)) in values.iter_mut().zip(&mask).enumerate() {
            if m {
                if !v.is_finite() {
                    return Err(ImputeError::Parse {
                        row: i / k,
                        message: format!("non-finite observed value in feature {}", i % k),
                    });
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(TimeSeriesDataset {
            values,
            mask,
            timestamps,
            feature_names,
            meta: LoadMeta::default(),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    #[inline]
    pub fn value(&self, t: usize, k: usize) -> f64 {
        self.values[t * self.n_features() + k]
    }

    #[inline]
    pub fn observed(&self, t: usize, k: usize) -> bool {
        self.mask[t * self.n_features() + k]
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Same series seen through a narrower mask; cells outside `mask` get the sentinel.
    pub fn with_mask(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.mask.len() {
            return Err(ImputeError::Shape(
                "mask length differs from dataset".into(),
            ));
        }
        if mask.iter().zip(&self.mask).any(|(&new, &old)| new && !old) {
            return Err(ImputeError::InvalidArgument(
                "mask marks a cell observed that the dataset does not observe".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Ok(TimeSeriesDataset {
            values,
            mask: mask.to_vec(),
            timestamps: self.timestamps.clone(),
            feature_names: self.feature_names.clone(),
            meta: self.meta.clone(),
        })
    }

    /// Series for the observed values only (same mask) but with values replaced.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        TimeSeriesDataset {
            values,
            mask: self.mask.clone(),
            timestamps: self.timestamps.clone(),
            feature_names: self.feature_names.clone(),
            meta: self.meta.clone(),
        }
    }
}

/// Time since the last observation, per step and feature (`T × K`, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaMatrix {
    pub n_features: usize,
    pub delta: Vec<f64>,
}

impl DeltaMatrix {
    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.delta[t * self.n_features + k]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.delta[t * self.n_features..(t + 1) * self.n_features]
    }
}

pub fn compute_deltas(dataset: &TimeSeriesDataset) -> DeltaMatrix {
    let mask: Vec<f64> = dataset
        .mask
        .iter()
        .map(|&m| f64::from(u8::from(m)))
        .collect();
    DeltaMatrix {
        n_features: dataset.n_features(),
        delta: deltas_from_parts(dataset.timestamps(), &mask, dataset.n_features()),
    }
}

/// Gap recursion over raw parts. Gaps use `|d_t - d_{t-1}|` so the same routine
/// serves time-reversed sequences.
pub(crate) fn deltas_from_parts(timestamps: &[f64], mask: &[f64], k: usize) -> Vec<f64> {
    let t_len = timestamps.len();
    let mut delta = vec![0.0; t_len * k];
    for t in 1..t_len {
        let gap = (timestamps[t] - timestamps[t - 1]).abs();
        for j in 0..k {
            let prev = (t - 1) * k + j;
            delta[t * k + j] = if mask[prev] > 0.5 {
                gap
            } else {
                gap + delta[prev]
            };
        }
    }
    delta
}

/// Per-feature location and scale estimated over observed cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_normalizer(dataset: &TimeSeriesDataset, std_floor: f64) -> Result<NormStats> {
    let k = dataset.n_features();
    let mut mean = vec![0.0; k];
    let mut std = vec![0.0; k];
    for j in 0..k {
        let obs: Vec<f64> = (0..dataset.n_steps())
            .filter(|&t| dataset.observed(t, j))
            .map(|t| dataset.value(t, j))
            .collect();
        if obs.is_empty() {
            return Err(ImputeError::EmptyFeature(dataset.feature_names[j].clone()));
        }
        let n = obs.len() as f64;
        let mu = obs.iter().sum::<f64>() / n;
        let var = obs.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        mean[j] = mu;
        std[j] = var.sqrt().max(std_floor);
    }
    Ok(NormStats { mean, std })
}

impl NormStats {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_value(&self, k: usize, v: f64) -> f64 {
        (v - self.mean[k]) / self.std[k]
    }

    pub fn denormalize_value(&self, k: usize, v: f64) -> f64 {
        v * self.std[k] + self.mean[k]
    }

    /// Normalizes observed cells; unobserved cells keep the zero sentinel.
    pub fn normalize(&self, dataset: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.map_observed(dataset, |k, v| self.normalize_value(k, v))
    }

    pub fn denormalize(&self, dataset: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.map_observed(dataset, |k, v| self.denormalize_value(k, v))
    }

    /// Maps every cell of a dense `T × K` matrix back to raw units.
    pub fn denormalize_matrix(&self, values: &[f64]) -> Vec<f64> {
        let k = self.n_features();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.denormalize_value(i % k, v))
            .collect()
    }

    fn map_observed(
        &self,
        dataset: &TimeSeriesDataset,
        f: impl Fn(usize, f64) -> f64,
    ) -> Result<TimeSeriesDataset> {
        let k = dataset.n_features();
        if k != self.n_features() {
            return Err(ImputeError::Shape(format!(
                "normalizer has {} features, dataset has {k}",
                self.n_features()
            )));
        }
        let values = dataset
            .values
            .iter()
            .zip(&dataset.mask)
            .enumerate()
            .map(|(i, (&v, &m))| if m { f(i % k, v) } else { 0.0 })
            .collect();
        Ok(dataset.with_values(values))
    }
}

/// Disjoint partition of the observed cells into training input and held-out truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSplit {
    pub train_mask: Vec<bool>,
    pub eval_mask: Vec<bool>,
    pub n_features: usize,
    pub rate: f64,
    pub seed: u64,
    /// The rate is a fraction of originally observed cells, not of all cells.
    pub rate_convention: String,
}

pub const RATE_CONVENTION: &str = "fraction_of_observed_cells";

/// Holds out each observed cell independently with probability `rate`.
pub fn make_mcar_split(dataset: &TimeSeriesDataset, rate: f64, seed: u64) -> Result<MaskSplit> {
    if !(0.0..1.0).contains(&rate) {
        return Err(ImputeError::InvalidArgument(format!(
            "missing rate {rate} outside [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_mask = vec![false; dataset.mask.len()];
    let mut eval_mask = vec![false; dataset.mask.len()];
    for (i, &m) in dataset.mask.iter().enumerate() {
        if !m {
            continue;
        }
        if rng.gen::<f64>() < rate {
            eval_mask[i] = true;
        } else {
            train_mask[i] = true;
        }
    }
    Ok(MaskSplit {
        train_mask,
        eval_mask,
        n_features: dataset.n_features(),
        rate,
        seed,
        rate_convention: RATE_CONVENTION.to_string(),
    })
}

impl MaskSplit {
    pub fn n_eval(&self) -> usize {
        self.eval_mask.iter().filter(|&&m| m).count()
    }

    /// Stable hex digest of the evaluation mask.
    pub fn eval_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.n_features as u64).to_le_bytes());
        let bytes: Vec<u8> = self.eval_mask.iter().map(|&m| u8::from(m)).collect();
        hasher.update(&bytes);
        hex::encode(&hasher.finalize()[..8])
    }

    /// Writes `(t, k, split)` triples for every observed cell.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,k,split\n");
        for (i, (&tr, &ev)) in self.train_mask.iter().zip(&self.eval_mask).enumerate() {
            let label = match (tr, ev) {
                (true, _) => "train",
                (_, true) => "eval",
                _ => continue,
            };
            out.push_str(&format!(
                "{},{},{}\n",
                i / self.n_features,
                i % self.n_features,
                label
            ));
        }
        crate::io_util::write_atomic(path, out.as_bytes())
    }
}

/// Reads a split written by [`MaskSplit::write_csv`].
pub fn read_split_csv(
    path: &Path,
    n_steps: usize,
    n_features: usize,
) -> Result<(Vec<bool>, Vec<bool>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut train = vec![false; n_steps * n_features];
    let mut eval = vec![false; n_steps * n_features];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| ImputeError::Parse {
                    row: row + 1,
                    message: "bad split index".into(),
                })
        };
        let (t, k) = (parse(0)?, parse(1)?);
        if t >= n_steps || k >= n_features {
            return Err(ImputeError::Parse {
                row: row + 1,
                message: format!("cell ({t},{k}) out of range"),
            });
        }
        match rec.get(2).map(str::trim) {
            Some("train") => train[t * n_features + k] = true,
            Some("eval") => eval[t * n_features + k] = true,
            other => {
                return Err(ImputeError::Parse {
                    row: row + 1,
                    message: format!("unknown split label {other:?}"),
                })
            }
        }
    }
    Ok((train, eval))
}
