//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{
    load_csv_with, make_mcar_split, write_matrix_csv, CsvOptions, TimeSeriesDataset,
};
use crate::error::{ImputeError, Result};
use crate::evaluation::{
    evaluate_split, reports_csv, reports_json, run_benchmark, split_seed, timings_csv,
    write_band_csv, CrpsOptions, MetricReport,
};
use crate::impute::impute;
use crate::io_util::{digest, write_atomic};
use crate::model::EnsembleMode;
use crate::synthetic::{generate, SyntheticConfig};
use crate::training::{train_with_callback, QuantileSpec, TrainConfig, TrainedModel};

pub const SYNTHETIC: &str = "synthetic";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub ensemble_modes: Vec<EnsembleMode>,
    /// Preset names ("Q1", "Q2", "Q3") or explicit level lists.
    pub quantiles: Vec<QuantileSpec>,
}

/// Experiment file. Relative paths resolve against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV path, or `synthetic` for the built-in generator.
    pub dataset: String,
    pub csv: CsvOptions,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub crps: CrpsOptions,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub sweep: Sweep,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: SYNTHETIC.into(),
            csv: CsvOptions::default(),
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
            crps: CrpsOptions::default(),
            rates: vec![0.5],
            seeds: vec![1, 2, 3, 4, 5],
            out_dir: PathBuf::from("out"),
            sweep: Sweep::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| ImputeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ImputeError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.dataset != SYNTHETIC && Path::new(&cfg.dataset).is_relative() {
            cfg.dataset = base.join(&cfg.dataset).to_string_lossy().into_owned();
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.rates.is_empty() {
            return Err(ImputeError::Config("rates must not be empty".into()));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(ImputeError::Config(format!("rate {r} outside (0, 1)")));
        }
        if self.seeds.is_empty() {
            return Err(ImputeError::Config("seeds must not be empty".into()));
        }
        for q in &self.sweep.quantiles {
            q.levels().map_err(|e| ImputeError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Digest of everything except the output directory.
    pub fn hash(&self) -> String {
        let keyed = Self {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        digest(&serde_json::to_vec(&keyed).expect("config serializes"))
    }

    pub fn load_dataset(&self) -> Result<TimeSeriesDataset> {
        if self.dataset == SYNTHETIC {
            return generate(&self.synthetic);
        }
        let path = Path::new(&self.dataset);
        if !path.is_file() {
            return Err(ImputeError::Config(format!(
                "dataset not found: {}",
                path.display()
            )));
        }
        load_csv_with(path, &self.csv)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "qsimpute",
    version,
    about = "Quantile sub-ensemble time-series imputation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed list with a single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV path or `synthetic`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Overrides the rate list with a single rate.
    #[arg(long)]
    pub rate: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train on one MCAR split and write a checkpoint and epoch log.
    Train(Common),
    /// Fill the missing cells of a CSV with a trained checkpoint.
    Impute {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "NA")]
        missing_token: String,
    },
    /// Train and score the model and baselines on one split.
    Evaluate(Common),
    /// All rates and seeds, plus sweeps, aggregated as mean and std.
    Benchmark(Common),
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &ImputeError) -> i32 {
    match e {
        ImputeError::Config(_) | ImputeError::InvalidArgument(_) => 2,
        _ => 1,
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(c) => cmd_train(&resolve(&c)?),
        Command::Impute {
            checkpoint,
            input,
            output,
            missing_token,
        } => cmd_impute(&checkpoint, &input, &output, &missing_token),
        Command::Evaluate(c) => cmd_evaluate(&resolve(&c)?),
        Command::Benchmark(c) => cmd_benchmark(&resolve(&c)?),
    }
}

/// Loads the config file and applies command-line overrides.
pub fn resolve(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(d) = &c.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(r) = c.rate {
        cfg.rates = vec![r];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializes");
    b.push(b'\n');
    b
}

#[derive(Serialize)]
struct EpochRow<'a> {
    epoch: usize,
    #[serde(rename = "L1")]
    l1: f64,
    #[serde(rename = "L2")]
    l2: f64,
    #[serde(rename = "L_quantile")]
    l_quantile: f64,
    #[serde(rename = "L_consistency")]
    l_consistency: f64,
    #[serde(rename = "L_nll")]
    l_nll: f64,
    total: f64,
    config_hash: &'a str,
    seed: u64,
}

/// Writes the checkpoint, a JSON-lines epoch log and a wall-clock sidecar.
fn write_train_outputs(dir: &Path, trained: &TrainedModel) -> Result<()> {
    Checkpoint::from_trained(trained).save(&dir.join("checkpoint.json"))?;
    let hash = trained.config.hash();
    let mut log = Vec::new();
    for e in &trained.trajectory {
        let row = EpochRow {
            epoch: e.epoch,
            l1: e.l1,
            l2: e.l2,
            l_quantile: e.l_quantile,
            l_consistency: e.l_consistency,
            l_nll: e.l_nll,
            total: e.total,
            config_hash: &hash,
            seed: trained.config.seed,
        };
        serde_json::to_writer(&mut log, &row).expect("serializes");
        log.push(b'\n');
    }
    write_atomic(&dir.join("train_log.jsonl"), &log)?;
    let timing: Vec<(usize, u64)> = trained
        .trajectory
        .iter()
        .map(|e| (e.epoch, e.wall_ms))
        .collect();
    write_atomic(
        &dir.join("timing.json"),
        &json(&serde_json::json!({
            "train_wall_ms": trained.train_wall_ms,
            "epoch_wall_ms": timing,
        })),
    )
}

fn single(cfg: &ExperimentConfig) -> (u64, f64) {
    (cfg.seeds[0], cfg.rates[0])
}

/// Trains on one split: first seed, first rate.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let (seed, rate) = single(cfg);
    let split = make_mcar_split(&ds, rate, split_seed(seed, rate))?;
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let every = tc.checkpoint_every;
    let trained = train_with_callback(&ds, &split, &tc, |log, model, stats| match every {
        Some(m) if m > 0 && log.epoch % m == 0 => Checkpoint::from_model(model, stats, &tc).save(
            &cfg.out_dir
                .join(format!("checkpoint_epoch{:04}.json", log.epoch)),
        ),
        _ => Ok(()),
    })?;
    split.write_csv(&cfg.out_dir.join("split.csv"))?;
    write_train_outputs(&cfg.out_dir, &trained)?;
    println!(
        "trained {} epochs, final loss {:.6}; wrote {}",
        trained.trajectory.len(),
        trained.trajectory.last().map_or(f64::NAN, |e| e.total),
        cfg.out_dir.join("checkpoint.json").display()
    );
    Ok(())
}

/// Path of the band file that accompanies `output`.
pub fn band_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}.bands.csv"))
}

/// Fills a CSV with a checkpoint.
pub fn cmd_impute(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    missing_token: &str,
) -> Result<()> {
    if !input.is_file() {
        return Err(ImputeError::Config(format!(
            "input not found: {}",
            input.display()
        )));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    let opts = CsvOptions {
        missing_token: missing_token.to_string(),
        ..CsvOptions::default()
    };
    let raw = load_csv_with(input, &opts)?;
    if raw.n_features() != ck.shapes.n_features {
        return Err(ImputeError::Shape(format!(
            "checkpoint expects {} features, {} has {}",
            ck.shapes.n_features,
            input.display(),
            raw.n_features()
        )));
    }
    let stats = &ck.norm_stats;
    let normalized = stats.normalize(&raw)?;
    let imp = impute(
        &model,
        &normalized,
        ck.config.window_length,
        ck.config.variance_mode,
    )?;
    let filled = imp.filled_raw(stats, &raw);
    write_matrix_csv(output, &raw, &filled)?;
    let truth: Vec<Option<f64>> = raw
        .values()
        .iter()
        .zip(raw.mask())
        .map(|(&v, &m)| m.then_some(v))
        .collect();
    write_band_csv(
        &band_path(output),
        &imp,
        stats,
        &truth,
        raw.mask(),
        raw.timestamps(),
    )?;
    let manifest = serde_json::json!({
        "config_hash": ck.config_hash,
        "seed": ck.seed,
        "input": input.display().to_string(),
        "filled": output.display().to_string(),
        "bands": band_path(output).display().to_string(),
        "n_imputed": raw.mask().iter().filter(|m| !**m).count(),
    });
    let manifest_path = output.with_file_name(format!(
        "{}.manifest.json",
        output
            .file_stem()
            .map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned())
    ));
    write_atomic(&manifest_path, &json(&manifest))?;
    println!(
        "wrote {} and {}",
        output.display(),
        band_path(output).display()
    );
    Ok(())
}

/// Trains and scores one split, first seed and first rate.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let (seed, rate) = single(cfg);
    let split = make_mcar_split(&ds, rate, split_seed(seed, rate))?;
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let outcome = evaluate_split(&ds, split, &tc, cfg.crps, seed)?;
    let dir = &cfg.out_dir;
    write_atomic(&dir.join("metrics.csv"), &reports_csv(&outcome.reports)?)?;
    write_atomic(&dir.join("metrics.json"), &reports_json(&outcome.reports)?)?;
    write_atomic(&dir.join("timings.csv"), &timings_csv(&outcome.reports)?)?;
    outcome.split.write_csv(&dir.join("split.csv"))?;
    write_train_outputs(dir, &outcome.trained)?;
    let truth: Vec<Option<f64>> = ds.values().iter().map(|&v| Some(v)).collect();
    write_band_csv(
        &dir.join("bands.csv"),
        &outcome.imputation,
        &outcome.trained.stats,
        &truth,
        &outcome.split.train_mask,
        ds.timestamps(),
    )?;
    print_rows(&outcome.reports);
    Ok(())
}

fn print_rows(rows: &[MetricReport]) {
    println!(
        "{:<16} {:>5} {:>10} {:>10}",
        "method", "rate", "mae", "crps"
    );
    for r in rows {
        let crps = r.crps.map_or_else(|| "-".into(), |c| format!("{c:.5}"));
        println!(
            "{:<16} {:>5} {:>10.5} {:>10}",
            r.method, r.rate, r.mae, crps
        );
    }
}

/// One block of the benchmark: a fixed ensemble mode and quantile set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Block {
    pub ensemble_mode: EnsembleMode,
    pub quantiles: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub ensemble_mode: EnsembleMode,
    pub quantiles: String,
    pub method: String,
    pub rate: f64,
    pub n_seeds: usize,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub mae_raw_mean: f64,
    pub mae_raw_std: f64,
    pub crps_mean: Option<f64>,
    pub crps_std: Option<f64>,
    pub crps_raw_mean: Option<f64>,
    pub crps_raw_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub ensemble_mode: EnsembleMode,
    pub quantiles: String,
    pub seed: u64,
    pub error: String,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Aggregates per-seed rows by (method, rate), keeping first-seen order.
pub fn summarize(block: &Block, rows: &[MetricReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in rows {
        if !keys
            .iter()
            .any(|(m, rate)| *m == r.method && *rate == r.rate)
        {
            keys.push((r.method.clone(), r.rate));
        }
    }
    keys.into_iter()
        .map(|(method, rate)| {
            let group: Vec<&MetricReport> = rows
                .iter()
                .filter(|r| r.method == method && r.rate == rate)
                .collect();
            let col = |f: &dyn Fn(&MetricReport) -> f64| {
                mean_std(&group.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let opt_col = |f: &dyn Fn(&MetricReport) -> Option<f64>| -> (Option<f64>, Option<f64>) {
                let v: Option<Vec<f64>> = group.iter().map(|r| f(r)).collect();
                match v {
                    Some(v) => {
                        let (m, s) = mean_std(&v);
                        (Some(m), Some(s))
                    }
                    None => (None, None),
                }
            };
            let (mae_mean, mae_std) = col(&|r| r.mae);
            let (mae_raw_mean, mae_raw_std) = col(&|r| r.mae_raw);
            let (crps_mean, crps_std) = opt_col(&|r| r.crps);
            let (crps_raw_mean, crps_raw_std) = opt_col(&|r| r.crps_raw);
            SummaryRow {
                ensemble_mode: block.ensemble_mode,
                quantiles: block.quantiles.clone(),
                method,
                rate,
                n_seeds: group.len(),
                mae_mean,
                mae_std,
                mae_raw_mean,
                mae_raw_std,
                crps_mean,
                crps_std,
                crps_raw_mean,
                crps_raw_std,
            }
        })
        .collect()
}

fn summary_csv(rows: &[SummaryRow], config_hash: &str, seeds: &[u64]) -> Result<Vec<u8>> {
    let seeds = seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(" ");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "ensemble_mode",
        "quantiles",
        "method",
        "rate",
        "n_seeds",
        "mae",
        "mae_raw",
        "crps",
        "crps_raw",
        "seeds",
        "config_hash",
    ])?;
    let pm = |m: f64, s: f64| format!("{m:.6} ± {s:.6}");
    let opm = |m: Option<f64>, s: Option<f64>| match (m, s) {
        (Some(m), Some(s)) => pm(m, s),
        _ => "-".into(),
    };
    for r in rows {
        w.write_record([
            r.ensemble_mode.as_str().to_string(),
            r.quantiles.clone(),
            r.method.clone(),
            format!("{}", r.rate),
            r.n_seeds.to_string(),
            pm(r.mae_mean, r.mae_std),
            pm(r.mae_raw_mean, r.mae_raw_std),
            opm(r.crps_mean, r.crps_std),
            opm(r.crps_raw_mean, r.crps_raw_std),
            seeds.clone(),
            config_hash.to_string(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| ImputeError::Shape(format!("csv buffer: {e}")))
}

/// The (ensemble mode, quantile set) combinations of a config.
pub fn blocks(cfg: &ExperimentConfig) -> Vec<(Block, TrainConfig)> {
    let modes = if cfg.sweep.ensemble_modes.is_empty() {
        vec![cfg.train.ensemble_mode]
    } else {
        cfg.sweep.ensemble_modes.clone()
    };
    let quantiles = if cfg.sweep.quantiles.is_empty() {
        vec![cfg.train.quantiles.clone()]
    } else {
        cfg.sweep.quantiles.clone()
    };
    let mut out = Vec::new();
    for &mode in &modes {
        for q in &quantiles {
            let tc = TrainConfig {
                ensemble_mode: mode,
                quantiles: q.clone(),
                ..cfg.train.clone()
            };
            out.push((
                Block {
                    ensemble_mode: mode,
                    quantiles: q.label(),
                },
                tc,
            ));
        }
    }
    out
}

/// Runs every block and seed; a failing seed is recorded and skipped.
pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let config_hash = cfg.hash();
    let mut all_rows = Vec::new();
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for (block, tc) in blocks(cfg) {
        let mut rows = Vec::new();
        for &seed in &cfg.seeds {
            match run_benchmark(&ds, &cfg.rates, &tc, cfg.crps, seed) {
                Ok(r) => rows.extend(r),
                Err(e) => {
                    eprintln!(
                        "seed {seed} failed ({} / {}): {e}",
                        block.ensemble_mode.as_str(),
                        block.quantiles
                    );
                    failures.push(Failure {
                        ensemble_mode: block.ensemble_mode,
                        quantiles: block.quantiles.clone(),
                        seed,
                        error: e.to_string(),
                    });
                }
            }
        }
        summary.extend(summarize(&block, &rows));
        all_rows.extend(rows.into_iter().map(|r| (block.clone(), r)));
    }
    let dir = &cfg.out_dir;
    let reports: Vec<MetricReport> = all_rows.iter().map(|(_, r)| r.clone()).collect();
    let blocks_col: Vec<&Block> = all_rows.iter().map(|(b, _)| b).collect();
    write_atomic(
        &dir.join("rows.csv"),
        &tag_rows(&reports_csv(&reports)?, &blocks_col)?,
    )?;
    write_atomic(&dir.join("rows.json"), &reports_json(&reports)?)?;
    write_atomic(&dir.join("timings.csv"), &timings_csv(&reports)?)?;
    write_atomic(
        &dir.join("summary.csv"),
        &summary_csv(&summary, &config_hash, &cfg.seeds)?,
    )?;
    write_atomic(
        &dir.join("summary.json"),
        &json(&serde_json::json!({
            "config_hash": config_hash,
            "seeds": cfg.seeds,
            "rows": summary,
            "failures": failures,
        })),
    )?;
    for r in &summary {
        let crps = r.crps_mean.map_or_else(
            || "-".into(),
            |c| format!("{c:.5} ± {:.5}", r.crps_std.unwrap_or(0.0)),
        );
        println!(
            "{:<13} {:<5} {:<15} {:>4}  mae {:.5} ± {:.5}  crps {}",
            r.ensemble_mode.as_str(),
            r.quantiles,
            r.method,
            r.rate,
            r.mae_mean,
            r.mae_std,
            crps
        );
    }
    if !failures.is_empty() {
        eprintln!("{} seed run(s) failed; see summary.json", failures.len());
        if all_rows.is_empty() {
            return Err(ImputeError::InvalidArgument("every seed failed".into()));
        }
    }
    Ok(())
}

fn tag_rows(csv_bytes: &[u8], blocks: &[&Block]) -> Result<Vec<u8>> {
    let mut rdr = csv::Reader::from_reader(csv_bytes);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["ensemble_mode".to_string(), "quantiles".to_string()];
    header.extend(rdr.headers()?.iter().map(str::to_string));
    w.write_record(&header)?;
    for (rec, b) in rdr.records().zip(blocks) {
        let rec = rec?;
        let mut out = vec![b.ensemble_mode.as_str().to_string(), b.quantiles.clone()];
        out.extend(rec.iter().map(str::to_string));
        w.write_record(&out)?;
    }
    w.into_inner()
        .map_err(|e| ImputeError::Shape(format!("csv buffer: {e}")))
}
