use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::baselines::{forward_fill, linear_interpolate, mean_impute, naive_gaussian};
use super::metrics::{crps_discrete, masked_mae, per_quantile_pinball, CrpsOptions};
use crate::data::{make_mcar_split, MaskSplit, NormStats, TimeSeriesDataset};
use crate::error::{ImputeError, Result};
use crate::impute::{impute, Imputation};
use crate::io_util::write_atomic;
use crate::training::{train, TrainConfig, TrainedModel};

pub const MODEL_METHOD: &str = "model";

/// One row of a benchmark table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub rate: f64,
    pub seed: u64,
    /// Masked MAE in normalized units.
    pub mae: f64,
    pub mae_raw: f64,
    /// Absent for deterministic methods.
    pub crps: Option<f64>,
    pub crps_raw: Option<f64>,
    /// Pinball loss per training quantile level, normalized units (model only).
    pub per_quantile_pinball: Vec<f64>,
    pub n_eval_points: usize,
    pub train_wall_ms: u64,
    pub infer_wall_ms: u64,
    pub config_hash: String,
    pub variance_mode: String,
    pub crps_estimator: String,
    pub crps_normalized_by_truth: bool,
    pub eval_hash: String,
}

/// Derives a stream seed from the master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Seed of the MCAR split for `rate`; shared by every method.
pub fn split_seed(master: u64, rate: f64) -> u64 {
    derive_seed(master, &format!("split/{rate}"))
}

/// Seed used to train the model at `rate`.
pub fn model_seed(master: u64, rate: f64) -> u64 {
    derive_seed(master, &format!("model/{rate}"))
}

/// Everything scored on one split.
pub struct SplitOutcome {
    pub split: MaskSplit,
    pub trained: TrainedModel,
    pub imputation: Imputation,
    pub reports: Vec<MetricReport>,
}

/// Trains on `split`, imputes, and scores the model and the baselines.
pub fn evaluate_split(
    dataset: &TimeSeriesDataset,
    split: MaskSplit,
    config: &TrainConfig,
    crps: CrpsOptions,
    master_seed: u64,
) -> Result<SplitOutcome> {
    if split.n_eval() == 0 {
        return Err(ImputeError::EmptyEvalSet);
    }
    let visible = dataset.with_mask(&split.train_mask)?;
    let trained = train(dataset, &split, config)?;
    let stats = &trained.stats;
    let k = dataset.n_features();
    let truth_raw = dataset.values();
    let truth_norm = normalize_all(stats, truth_raw, k);
    let eval = &split.eval_mask;

    let infer_start = Instant::now();
    let input = stats.normalize(&visible)?;
    let imputation = impute(
        &trained.model,
        &input,
        config.window_length,
        config.variance_mode,
    )?;
    let infer_wall_ms = infer_start.elapsed().as_millis() as u64;

    let base = MetricReport {
        method: String::new(),
        rate: split.rate,
        seed: master_seed,
        mae: 0.0,
        mae_raw: 0.0,
        crps: None,
        crps_raw: None,
        per_quantile_pinball: Vec::new(),
        n_eval_points: split.n_eval(),
        train_wall_ms: 0,
        infer_wall_ms: 0,
        config_hash: config.hash(),
        variance_mode: config.variance_mode.as_str().to_string(),
        crps_estimator: crps.estimator.as_str().to_string(),
        crps_normalized_by_truth: crps.normalize_by_truth,
        eval_hash: split.eval_hash(),
    };

    let mut reports = Vec::new();
    let mean_raw = stats.denormalize_matrix(&imputation.mean);
    let var_raw = scale_var(stats, &imputation.var, k);
    reports.push(MetricReport {
        method: MODEL_METHOD.into(),
        mae: masked_mae(&imputation.mean, &truth_norm, eval)?,
        mae_raw: masked_mae(&mean_raw, truth_raw, eval)?,
        crps: Some(crps_discrete(
            &imputation.mean,
            &imputation.var,
            &truth_norm,
            eval,
            crps,
        )?),
        crps_raw: Some(crps_discrete(&mean_raw, &var_raw, truth_raw, eval, crps)?),
        per_quantile_pinball: per_quantile_pinball(
            &imputation.mean,
            &imputation.var,
            &truth_norm,
            eval,
            trained.model.spec.levels.as_slice(),
        )?,
        train_wall_ms: trained.train_wall_ms,
        infer_wall_ms,
        ..base.clone()
    });

    type Baseline = fn(&TimeSeriesDataset) -> Result<Vec<f64>>;
    let deterministic: [(&str, Baseline); 3] = [
        ("forward", forward_fill),
        ("linear", linear_interpolate),
        ("mean", mean_impute),
    ];
    for (name, f) in deterministic {
        let started = Instant::now();
        let pred_raw = f(&visible)?;
        let ms = started.elapsed().as_millis() as u64;
        let pred_norm = normalize_all(stats, &pred_raw, k);
        reports.push(MetricReport {
            method: name.into(),
            mae: masked_mae(&pred_norm, &truth_norm, eval)?,
            mae_raw: masked_mae(&pred_raw, truth_raw, eval)?,
            infer_wall_ms: ms,
            ..base.clone()
        });
    }

    let started = Instant::now();
    let (g_mean_raw, g_var_raw) = naive_gaussian(&visible)?;
    let ms = started.elapsed().as_millis() as u64;
    let g_mean = normalize_all(stats, &g_mean_raw, k);
    let g_var: Vec<f64> = g_var_raw
        .iter()
        .enumerate()
        .map(|(i, v)| v / stats.std[i % k].powi(2))
        .collect();
    reports.push(MetricReport {
        method: "naive_gaussian".into(),
        mae: masked_mae(&g_mean, &truth_norm, eval)?,
        mae_raw: masked_mae(&g_mean_raw, truth_raw, eval)?,
        crps: Some(crps_discrete(&g_mean, &g_var, &truth_norm, eval, crps)?),
        crps_raw: Some(crps_discrete(
            &g_mean_raw,
            &g_var_raw,
            truth_raw,
            eval,
            crps,
        )?),
        infer_wall_ms: ms,
        ..base
    });

    Ok(SplitOutcome {
        split,
        trained,
        imputation,
        reports,
    })
}

/// One MCAR split per rate, the model and every baseline scored on it.
pub fn run_benchmark(
    dataset: &TimeSeriesDataset,
    rates: &[f64],
    config: &TrainConfig,
    crps: CrpsOptions,
    master_seed: u64,
) -> Result<Vec<MetricReport>> {
    let mut rows = Vec::new();
    for &rate in rates {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(ImputeError::InvalidArgument(format!(
                "rate {rate} outside (0, 1)"
            )));
        }
        let split = make_mcar_split(dataset, rate, split_seed(master_seed, rate))?;
        let cfg = TrainConfig {
            seed: model_seed(master_seed, rate),
            ..config.clone()
        };
        rows.extend(evaluate_split(dataset, split, &cfg, crps, master_seed)?.reports);
    }
    Ok(rows)
}

fn normalize_all(stats: &NormStats, values: &[f64], k: usize) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| stats.normalize_value(i % k, v))
        .collect()
}

fn scale_var(stats: &NormStats, var: &[f64], k: usize) -> Vec<f64> {
    var.iter()
        .enumerate()
        .map(|(i, v)| v * stats.std[i % k].powi(2))
        .collect()
}

/// Columns of the metrics table; timings live in a sidecar.
pub const TABLE_HEADER: [&str; 10] = [
    "method",
    "rate",
    "seed",
    "mae",
    "mae_raw",
    "crps",
    "crps_raw",
    "n_eval_points",
    "config_hash",
    "eval_hash",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x}"))
}

/// Serializes rows as CSV without wall-clock columns.
pub fn reports_csv(rows: &[MetricReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            format!("{}", r.rate),
            r.seed.to_string(),
            format!("{}", r.mae),
            format!("{}", r.mae_raw),
            opt(r.crps),
            opt(r.crps_raw),
            r.n_eval_points.to_string(),
            r.config_hash.clone(),
            r.eval_hash.clone(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| ImputeError::Shape(format!("csv buffer: {e}")))
}

/// Wall-clock sidecar: method, rate, seed, train_wall_ms, infer_wall_ms.
pub fn timings_csv(rows: &[MetricReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "rate", "seed", "train_wall_ms", "infer_wall_ms"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            format!("{}", r.rate),
            r.seed.to_string(),
            r.train_wall_ms.to_string(),
            r.infer_wall_ms.to_string(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| ImputeError::Shape(format!("csv buffer: {e}")))
}

/// JSON rows with wall-clock fields zeroed.
pub fn reports_json(rows: &[MetricReport]) -> Result<Vec<u8>> {
    let stripped: Vec<MetricReport> = rows
        .iter()
        .map(|r| MetricReport {
            train_wall_ms: 0,
            infer_wall_ms: 0,
            ..r.clone()
        })
        .collect();
    serde_json::to_vec_pretty(&stripped).map_err(|e| ImputeError::Shape(e.to_string()))
}

pub const BAND_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Quantile-band CSV: t, k, truth, observed_flag, q05, q25, q50, q75, q95 in raw units.
///
/// `truth` is empty where the value is unknown; `observed` marks cells the
/// model was given.
pub fn write_band_csv(
    path: &Path,
    imputation: &Imputation,
    stats: &NormStats,
    truth: &[Option<f64>],
    observed: &[bool],
    timestamps: &[f64],
) -> Result<()> {
    let k = imputation.n_features;
    let bands: Vec<Vec<f64>> = BAND_LEVELS
        .iter()
        .map(|&q| stats.denormalize_matrix(&imputation.quantile(q)))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t",
        "k",
        "truth",
        "observed_flag",
        "q05",
        "q25",
        "q50",
        "q75",
        "q95",
    ])?;
    for i in 0..imputation.n_steps * k {
        let mut rec = vec![
            crate::data::format_number(timestamps[i / k]),
            (i % k).to_string(),
            truth[i].map_or_else(String::new, |v| format!("{v}")),
            u8::from(observed[i]).to_string(),
        ];
        rec.extend(bands.iter().map(|b| format!("{}", b[i])));
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ImputeError::Shape(format!("csv buffer: {e}")))?;
    write_atomic(path, &bytes)
}
