//! Metrics, classical baselines and the benchmark harness.

pub mod baselines;
pub mod benchmark;
pub mod metrics;

pub use baselines::{
    feature_moments, forward_fill, linear_interpolate, mean_impute, naive_gaussian,
};
pub use benchmark::{
    evaluate_split, model_seed, reports_csv, reports_json, run_benchmark, split_seed, timings_csv,
    write_band_csv, MetricReport, SplitOutcome, BAND_LEVELS, MODEL_METHOD,
};
pub use metrics::{
    crps_discrete, crps_grid, crps_grid_mean, crps_grid_quadrature, masked_mae,
    per_quantile_pinball, std_normal_cdf, CrpsEstimator, CrpsOptions,
};
