//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs the synthetic benchmark at desk scale (batch 8, 200 epochs), so the
//! whole target takes several minutes on one core.

use std::time::Instant;

use qsimpute::data::{
    compute_deltas, fit_normalizer, make_mcar_split, make_windows, TimeSeriesDataset, Window,
};
use qsimpute::evaluation::{
    crps_discrete, crps_grid, crps_grid_mean, crps_grid_quadrature, evaluate_split, masked_mae,
    mean_impute, model_seed, reports_csv, reports_json, split_seed, CrpsOptions, MetricReport,
    SplitOutcome,
};
use qsimpute::impute::impute;
use qsimpute::linalg::Matrix;
use qsimpute::model::{
    bidirectional_impute, directional_pass, feature_regress, history_regress, recurrent_step,
    recurrent_step_backward, temporal_decay, Directions, EnsembleMode, ImputerModel, ImputerParams,
    LstmParams, ModelSpec, RecurrentState,
};
use qsimpute::quantile::{
    aggregate_mixture, gaussian_nll, masked_quantile_loss, pinball, pinball_max_form,
    predictive_quantile, QuantileLevels,
};
use qsimpute::synthetic::{generate, SyntheticConfig};
use qsimpute::training::{grad_check, LossWeights, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

// Direct stderr write, not captured by the test harness.
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stderr().lock(), $($arg)*);
    }};
}

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Checks {
    failed: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failed.push(what.into());
        }
    }

    fn close(&mut self, got: f64, want: f64, tol: f64, what: &str) {
        self.check(
            (got - want).abs() <= tol,
            format!("{what}: got {got}, want {want}"),
        );
    }
}

fn bench_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        ..TrainConfig::default()
    }
}

fn dataset(seed: u64) -> TimeSeriesDataset {
    generate(&SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn run(seed: u64, rate: f64, config: &TrainConfig) -> SplitOutcome {
    let ds = dataset(seed);
    let split = make_mcar_split(&ds, rate, split_seed(seed, rate)).unwrap();
    let cfg = TrainConfig {
        seed: model_seed(seed, rate),
        ..config.clone()
    };
    let started = Instant::now();
    let out = evaluate_split(&ds, split, &cfg, CrpsOptions::default(), seed).unwrap();
    let row = row(&out.reports, "model");
    emit!(
        "  run seed={seed} rate={rate} mode={} decay={} mae={:.4} crps={:.4} ({:.1}s)",
        config.ensemble_mode.as_str(),
        config.use_decay,
        row.mae,
        row.crps.unwrap(),
        started.elapsed().as_secs_f64()
    );
    out
}

fn row<'a>(rows: &'a [MetricReport], method: &str) -> &'a MetricReport {
    rows.iter().find(|r| r.method == method).unwrap()
}

fn mean_of(outs: &[SplitOutcome], method: &str, f: impl Fn(&MetricReport) -> f64) -> f64 {
    outs.iter().map(|o| f(row(&o.reports, method))).sum::<f64>() / outs.len() as f64
}

fn gaussian_crps(mean: f64, var: f64, x: f64) -> f64 {
    let sigma = var.sqrt();
    let z = (x - mean) / sigma;
    let n = Normal::new(0.0, 1.0).unwrap();
    sigma * (2.0 * n.pdf(z) + z * (2.0 * n.cdf(z) - 1.0) - 1.0 / std::f64::consts::PI.sqrt())
}

fn series(values: Vec<f64>, mask: Vec<bool>, timestamps: Vec<f64>, k: usize) -> TimeSeriesDataset {
    let names = (0..k).map(|j| format!("f{j}")).collect();
    TimeSeriesDataset::new(values, mask, timestamps, names).unwrap()
}

fn levels3() -> QuantileLevels {
    QuantileLevels::new(vec![0.1, 0.5, 0.9]).unwrap()
}

fn unit_examples(c: &mut Checks) {
    // Gap recursion.
    let ts = vec![0.0, 1.0, 2.0, 3.0];
    for (m, want) in [
        ([true, true, false, true], [0.0, 1.0, 1.0, 2.0]),
        ([true, false, false, true], [0.0, 1.0, 2.0, 3.0]),
    ] {
        let d = compute_deltas(&series(vec![1.0; 4], m.to_vec(), ts.clone(), 1));
        let got: Vec<f64> = (0..4).map(|t| d.get(t, 0)).collect();
        c.check(got == want, format!("deltas for {m:?}: {got:?}"));
    }

    // Normalizer.
    let ds = series(vec![1.0, 3.0], vec![true, true], vec![0.0, 1.0], 1);
    let stats = fit_normalizer(&ds, 1e-8).unwrap();
    c.close(stats.mean[0], 2.0, 1e-12, "normalizer mean");
    c.close(stats.std[0], 1.0, 1e-12, "normalizer std");
    let norm = stats.normalize(&ds).unwrap();
    c.check(norm.values() == [-1.0, 1.0], "normalized {1, 3}");

    // MCAR fraction.
    let big = series(
        vec![0.5; 10_000],
        vec![true; 10_000],
        (0..10_000).map(f64::from).collect(),
        1,
    );
    let split = make_mcar_split(&big, 0.5, 17).unwrap();
    let frac = split.n_eval() as f64 / 10_000.0;
    c.check(
        (frac - 0.5).abs() <= 0.02,
        format!("MCAR eval fraction {frac}"),
    );

    // History regression with an identity block.
    let (k, h) = (3, 5);
    let mut p = ImputerParams::init(k, h, 1, &mut ChaCha8Rng::seed_from_u64(0));
    p.w_x = Matrix::zeros(k, h);
    for i in 0..k {
        p.w_x.set(i, i, 1.0);
    }
    p.w_x.set(1, 0, 0.25);
    p.b_x = vec![0.0; k];
    let mut state = RecurrentState::zeros(h);
    state.h[0] = 1.0;
    let want: Vec<f64> = (0..k).map(|r| p.w_x.get(r, 0)).collect();
    c.check(
        history_regress(&state, &p) == want,
        "history regression picks the first column",
    );

    // Decay.
    let g = temporal_decay(&[2f64.ln()], &Matrix::identity(1), &[0.0]);
    c.close(g[0], 0.5, 1e-15, "decay at ln 2");

    // Feature regression.
    let swap = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
    c.check(
        feature_regress(&[3.0, 5.0], &swap, &[0.0, 0.0]) == [5.0, 3.0],
        "feature regression swap",
    );

    // Pinball.
    c.close(pinball(2.0, 1.0, 0.9), 0.9, 1e-15, "pinball(2, 1, 0.9)");
    c.close(pinball(1.0, 2.0, 0.9), 0.1, 1e-15, "pinball(1, 2, 0.9)");

    // Masked quantile loss, hand sum of the two terms in the library's argument order.
    let levels = QuantileLevels::new(vec![0.1, 0.9]).unwrap();
    let loss = masked_quantile_loss(&[1.0], &[1.0], &[vec![2.0], vec![0.0]], &levels).unwrap();
    let hand = 0.9 * (2.0 - 1.0) + 0.9 * (1.0 - 0.0);
    c.close(loss.raw_sum, hand, 1e-15, "masked quantile loss");
    let swapped = pinball(2.0, 1.0, 0.1) + pinball(0.0, 1.0, 0.9);
    c.close(
        swapped,
        0.1 * 1.0 + 0.1 * 1.0,
        1e-15,
        "swapped-order hand sum",
    );

    // Mixture.
    let (u, v) = aggregate_mixture(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
    c.close(u, 1.0, 1e-15, "mixture mean");
    c.close(v, 2.0, 1e-15, "mixture variance");

    // NLL.
    c.close(gaussian_nll(1.0, &[2.0], 1e-6), 1.0, 1e-15, "nll var 1");
    c.close(
        gaussian_nll(1f64.exp().powi(2), &[0.0], 1e-6),
        1.0,
        1e-12,
        "nll var e^2",
    );

    // Predictive quantile against an independent implementation.
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.975);
    c.close(
        predictive_quantile(0.0, 1.0, 0.975),
        z,
        1e-8,
        "quantile 0.975",
    );
    c.close(
        predictive_quantile(0.0, 1.0, 0.975),
        1.959964,
        1e-6,
        "quantile 0.975 table",
    );

    // Metrics and baselines.
    c.close(
        masked_mae(&[1.0, 5.0], &[2.0, 3.0], &[true, true]).unwrap(),
        1.5,
        1e-15,
        "masked MAE",
    );
    let crps0 = crps_grid_quadrature(0.0, 1.0, 0.0).unwrap();
    c.close(
        crps0,
        gaussian_crps(0.0, 1.0, 0.0),
        1e-2,
        "CRPS of N(0,1) at 0",
    );
    c.close(
        gaussian_crps(0.0, 1.0, 0.0),
        0.2337,
        1e-4,
        "closed-form CRPS at 0",
    );
    let gap = series(
        vec![1.0, 0.0, 3.0],
        vec![true, false, true],
        vec![0.0, 1.0, 2.0],
        1,
    );
    c.check(
        mean_impute(&gap).unwrap() == [1.0, 2.0, 3.0],
        "mean imputation",
    );
}

fn lstm_unroll(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = ImputerParams::init(3, 4, 1, &mut ChaCha8Rng::seed_from_u64(9)).lstm;
    let xs: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let readout: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let objective = |p: &LstmParams| {
        let mut s = RecurrentState::zeros(4);
        for x in &xs {
            s = recurrent_step(x, &s, p).0;
        }
        s.h.iter().zip(&readout).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut s = RecurrentState::zeros(4);
    let mut caches = Vec::new();
    for x in &xs {
        let (n, cache) = recurrent_step(x, &s, &p);
        caches.push(cache);
        s = n;
    }
    let mut grads = LstmParams {
        w_ih: Matrix::zeros(16, 3),
        w_hh: Matrix::zeros(16, 4),
        bias: vec![0.0; 16],
    };
    let (mut d_h, mut d_c) = (readout.clone(), vec![0.0; 4]);
    for cache in caches.iter().rev() {
        let b = recurrent_step_backward(cache, &d_h, &d_c, &p, &mut grads);
        d_h = b.d_h_prev;
        d_c = b.d_c_prev;
    }
    let analytic: Vec<f64> = grads
        .w_ih
        .data
        .iter()
        .chain(&grads.w_hh.data)
        .chain(&grads.bias)
        .copied()
        .collect();
    let (n_ih, n_hh) = (p.w_ih.data.len(), p.w_hh.data.len());
    let mut worst = 0f64;
    for (idx, &a) in analytic.iter().enumerate() {
        let bump = |delta: f64| {
            let mut q = p.clone();
            match idx {
                i if i < n_ih => q.w_ih.data[i] += delta,
                i if i < n_ih + n_hh => q.w_hh.data[i - n_ih] += delta,
                i => q.bias[i - n_ih - n_hh] += delta,
            }
            objective(&q)
        };
        let numeric = (bump(1e-5) - bump(-1e-5)) / 2e-5;
        if a.abs().max(numeric.abs()) > 1e-8 {
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()));
        }
    }
    c.check(
        worst < 1e-4,
        format!("LSTM unroll relative error {worst:.2e}"),
    );
}

fn palindrome(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (t, k) = (9, 3);
    let mut values = vec![0.0; t * k];
    let mut mask = vec![0.0; t * k];
    for s in 0..=t / 2 {
        for j in 0..k {
            let m = f64::from(u8::from(rng.gen_bool(0.6)));
            let v = m * rng.gen_range(-2.0..2.0);
            for r in [s, t - 1 - s] {
                values[r * k + j] = v;
                mask[r * k + j] = m;
            }
        }
    }
    let w = Window::from_parts(values, mask, (0..t).map(|s| s as f64 * 2.0).collect());
    let p = ImputerParams::init(k, 6, 3, &mut ChaCha8Rng::seed_from_u64(21));
    let fwd = directional_pass(&w, &p, &levels3(), true).unwrap();
    let bwd = directional_pass(&w.reversed(), &p, &levels3(), true).unwrap();
    let replay = fwd.steps.iter().zip(&bwd.steps).all(|(a, b)| {
        a.v_heads
            .iter()
            .flatten()
            .zip(b.v_heads.iter().flatten())
            .all(|(x, y)| (x - y).abs() < 1e-6)
    });
    c.check(replay, "palindrome: backward pass replays forward pass");
    let out = bidirectional_impute(&w, &p, &p, &levels3(), true).unwrap();
    let symmetric = out.heads.iter().all(|h| {
        (0..t).all(|s| (0..k).all(|j| (h[s * k + j] - h[(t - 1 - s) * k + j]).abs() < 1e-6))
    });
    c.check(symmetric, "palindrome: combined output is time-symmetric");
}

fn delta_property(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut bad = 0;
    for _ in 0..1000 {
        let t = rng.gen_range(1..40);
        let k = rng.gen_range(1..5);
        let mut ts = vec![rng.gen_range(-5.0..5.0)];
        for _ in 1..t {
            let last = *ts.last().unwrap();
            ts.push(last + rng.gen_range(0.01..4.0));
        }
        let p_obs = rng.gen_range(0.0..1.0);
        let mask: Vec<bool> = (0..t * k).map(|_| rng.gen_bool(p_obs)).collect();
        let values = mask
            .iter()
            .map(|&m| if m { rng.gen_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let d = compute_deltas(&series(values, mask.clone(), ts.clone(), k));
        for j in 0..k {
            bad += usize::from(d.get(0, j) != 0.0);
            for s in 1..t {
                let carry = if mask[(s - 1) * k + j] {
                    0.0
                } else {
                    d.get(s - 1, j)
                };
                let rest = d.get(s, j) - (ts[s] - ts[s - 1]);
                bad += usize::from((rest - carry).abs() > 1e-9 * (1.0 + ts[s].abs()));
            }
        }
    }
    c.check(bad == 0, format!("gap recursion violated at {bad} cells"));
}

fn pinball_forms(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut mismatches = 0;
    for _ in 0..1_000_000 {
        let x: f64 = rng.gen_range(-100.0..100.0);
        let y: f64 = if rng.gen_bool(0.01) {
            x
        } else {
            rng.gen_range(-100.0..100.0)
        };
        let q: f64 = rng.gen_range(1e-6..1.0);
        mismatches += usize::from(pinball(x, y, q) != pinball_max_form(x, y, q));
    }
    c.check(
        mismatches == 0,
        format!("pinball forms differ on {mismatches} triples"),
    );
}

fn mixture_oracle(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut worst = 0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..12);
        let means: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let vars: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(0.0..5.0)
                }
            })
            .collect();
        let (u, v) = aggregate_mixture(&means, &vars).unwrap();
        let mu = means.iter().sum::<f64>() / n as f64;
        let two_pass = means
            .iter()
            .zip(&vars)
            .map(|(m, s)| s + (m - mu).powi(2))
            .sum::<f64>()
            / n as f64;
        worst = worst.max((u - mu).abs()).max((v - two_pass).abs());
        if v < 0.0 {
            worst = f64::INFINITY;
        }
    }
    c.check(
        worst < 1e-10,
        format!("mixture moments differ by {worst:.2e}"),
    );
}

fn criterion_1(c: &mut Checks) {
    unit_examples(c);
    lstm_unroll(c);
    palindrome(c);
    delta_property(c);
    pinball_forms(c);
    mixture_oracle(c);
}

fn criterion_2() -> Outcome {
    let window = {
        let (t, k) = (5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut mask: Vec<f64> = (0..t * k)
            .map(|_| f64::from(u8::from(rng.gen_bool(0.6))))
            .collect();
        mask[0] = 1.0;
        mask[4] = 0.0;
        let values = mask.iter().map(|m| m * rng.gen_range(-1.5..1.5)).collect();
        let mut ts = vec![0.0];
        for _ in 1..t {
            let last = *ts.last().unwrap();
            ts.push(last + rng.gen_range(0.5..2.0));
        }
        Window::from_parts(values, mask, ts)
    };
    let weights = LossWeights {
        lambda_consistency: 0.1,
        aux_nll_weight: 0.3,
        var_floor: 1e-6,
    };
    let mut worst = 0f64;
    let mut pass = true;
    let mut silent = Vec::new();
    for mode in [EnsembleMode::SharedTrunk, EnsembleMode::FullEnsemble] {
        let spec = ModelSpec {
            n_features: 3,
            hidden: 4,
            levels: levels3(),
            mode,
            use_decay: true,
            directions: Directions::Both,
        };
        let model = ImputerModel::init(spec, 1);
        let report = grad_check(&model, &window, &weights, 1e-5, 1e-4, 1e-7).unwrap();
        worst = worst.max(report.max_rel_error);
        pass &= report.passed();
        silent.extend(
            report
                .groups
                .iter()
                .filter(|g| g.compared == 0 && !g.name.ends_with("b_gamma"))
                .map(|g| g.name.clone()),
        );
    }
    Outcome {
        id: 2,
        pass: pass && silent.is_empty(),
        detail: format!("max relative error {worst:.2e} (tolerance 1e-4); groups without comparisons: {silent:?}"),
    }
}

fn criterion_3(trained: &[SplitOutcome]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst = 0f64;
    let mut worst_mean = 0f64;
    let grid = crps_grid();
    for _ in 0..100 {
        let u: f64 = rng.gen_range(-5.0..5.0);
        let var: f64 = rng.gen_range(0.01..9.0);
        let z: f64 = rng.sample(StandardNormal);
        let x = u + var.sqrt() * z * 1.5;
        let exact = gaussian_crps(u, var, x);
        let got = crps_discrete(&[u], &[var], &[x], &[true], CrpsOptions::default()).unwrap();
        worst = worst.max((got - exact).abs() / var.sqrt());
        let plain = crps_grid_mean(u, var, x, &grid).unwrap();
        worst_mean = worst_mean.max((plain - exact).abs() / var.sqrt());
    }
    let fine: Vec<f64> = (1..1000).map(|i| f64::from(i) / 1000.0).collect();
    let mut crossings = 0usize;
    for _ in 0..1000 {
        let u: f64 = rng.gen_range(-50.0..50.0);
        let var: f64 = if rng.gen_bool(0.1) {
            0.0
        } else {
            rng.gen_range(0.0..100.0)
        };
        crossings += fine
            .windows(2)
            .filter(|q| predictive_quantile(u, var, q[0]) > predictive_quantile(u, var, q[1]))
            .count();
    }
    for o in trained {
        let bands: Vec<Vec<f64>> = grid.iter().map(|&q| o.imputation.quantile(q)).collect();
        crossings += bands
            .windows(2)
            .map(|b| b[0].iter().zip(&b[1]).filter(|(a, c)| a > c).count())
            .sum::<usize>();
    }
    Outcome {
        id: 3,
        pass: worst < 1.5e-2 && crossings == 0,
        detail: format!(
            "max |CRPS - closed form| = {worst:.4} sigma (tolerance 0.015); plain 19-level mean would give {worst_mean:.4} sigma; quantile crossings {crossings}"
        ),
    }
}

fn passthrough_windows(model: &ImputerModel, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = dataset(seed);
    let k = ds.n_features();
    let stats = fit_normalizer(&ds, 1e-8).unwrap();
    let windows = make_windows(&stats.normalize(&ds).unwrap(), 48);
    let mut broken = 0;
    for _ in 0..100 {
        let src = &windows[rng.gen_range(0..windows.len())];
        let len = rng.gen_range(1..=src.len);
        let p_obs = rng.gen_range(0.05..1.0);
        let mask: Vec<f64> = (0..len * k)
            .map(|_| f64::from(u8::from(rng.gen_bool(p_obs))))
            .collect();
        let values = src.values[..len * k]
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let w = Window::from_parts(values, mask, src.timestamps[..len].to_vec());
        let out = model.impute_window(&w).unwrap();
        for head in out.heads.iter() {
            for ((a, b), m) in head.iter().zip(&w.values).zip(&w.mask) {
                broken += usize::from(*m > 0.5 && a.to_bits() != b.to_bits());
            }
        }
    }
    broken
}

fn criterion_4(trained: &SplitOutcome) -> Outcome {
    let untrained = ImputerModel::init(trained.trained.model.spec.clone(), 3);
    let before = passthrough_windows(&untrained, 71);
    let after = passthrough_windows(&trained.trained.model, 72);
    let ds = dataset(1);
    let visible = ds.with_mask(&trained.split.train_mask).unwrap();
    let stats = &trained.trained.stats;
    let input = stats.normalize(&visible).unwrap();
    let imp = impute(
        &trained.trained.model,
        &input,
        48,
        trained.trained.config.variance_mode,
    )
    .unwrap();
    let series_level = imp
        .heads
        .iter()
        .chain(std::iter::once(&imp.mean))
        .map(|h| {
            h.iter()
                .zip(input.values())
                .zip(input.mask())
                .filter(|((a, b), m)| **m && a.to_bits() != b.to_bits())
                .count()
        })
        .sum::<usize>();
    Outcome {
        id: 4,
        pass: before == 0 && after == 0 && series_level == 0,
        detail: format!(
            "observed cells altered: untrained {before}, trained {after} over 100 windows; full-series {series_level}"
        ),
    }
}

fn criterion_5(runs: &[SplitOutcome]) -> Outcome {
    let model = mean_of(runs, "model", |r| r.mae);
    let linear = mean_of(runs, "linear", |r| r.mae);
    let forward = mean_of(runs, "forward", |r| r.mae);
    let crps = mean_of(runs, "model", |r| r.crps.unwrap());
    let naive = mean_of(runs, "naive_gaussian", |r| r.crps.unwrap());
    Outcome {
        id: 5,
        pass: model < linear && model < forward && crps < naive,
        detail: format!(
            "mean MAE model {model:.4}, linear {linear:.4}, forward {forward:.4}; mean CRPS model {crps:.4}, naive Gaussian {naive:.4}"
        ),
    }
}

fn criterion_6(by_rate: &[(f64, &[SplitOutcome])]) -> Outcome {
    let maes: Vec<f64> = by_rate
        .iter()
        .map(|(_, o)| mean_of(o, "model", |r| r.mae))
        .collect();
    let (_, last) = by_rate.last().unwrap();
    let linear = mean_of(last, "linear", |r| r.mae);
    let monotone = maes.windows(2).all(|w| w[0] < w[1]);
    let listed: Vec<String> = by_rate
        .iter()
        .zip(&maes)
        .map(|((r, _), m)| format!("{r}: {m:.4}"))
        .collect();
    Outcome {
        id: 6,
        pass: monotone && maes[maes.len() - 1] < linear,
        detail: format!(
            "mean model MAE by rate [{}]; linear at 0.9 {linear:.4}",
            listed.join(", ")
        ),
    }
}

fn criterion_7(shared: &[SplitOutcome], full: &[SplitOutcome]) -> Outcome {
    let time = |o: &[SplitOutcome]| {
        o.iter()
            .map(|r| r.trained.train_wall_ms as f64)
            .sum::<f64>()
    };
    let ratio = time(shared) / time(full);
    let mae_s = mean_of(shared, "model", |r| r.mae);
    let mae_f = mean_of(full, "model", |r| r.mae);
    Outcome {
        id: 7,
        pass: ratio < 0.7 && mae_s <= 1.05 * mae_f,
        detail: format!(
            "train time ratio shared/full {ratio:.3} (limit 0.7); MAE shared {mae_s:.4} vs full {mae_f:.4} (limit x1.05)"
        ),
    }
}

fn criterion_8(with: &[SplitOutcome], without: &[SplitOutcome]) -> Outcome {
    let mae = |o: &[SplitOutcome]| mean_of(o, "model", |r| r.mae);
    let crps = |o: &[SplitOutcome]| mean_of(o, "model", |r| r.crps.unwrap());
    let (m1, m0) = (mae(with), mae(without));
    let (c1, c0) = (crps(with), crps(without));
    Outcome {
        id: 8,
        pass: m0 > m1 && c0 > c1,
        detail: format!(
            "mean MAE with decay {m1:.5}, without {m0:.5}; mean CRPS with {c1:.5}, without {c0:.5}"
        ),
    }
}

fn criterion_9(first: &SplitOutcome) -> Outcome {
    let again = run(1, 0.5, &bench_config());
    let zeroed = |rows: &[MetricReport]| -> Vec<MetricReport> {
        rows.iter()
            .map(|r| MetricReport {
                train_wall_ms: 0,
                infer_wall_ms: 0,
                ..r.clone()
            })
            .collect()
    };
    let csv_same = reports_csv(&first.reports).unwrap() == reports_csv(&again.reports).unwrap();
    let json_same = reports_json(&first.reports).unwrap() == reports_json(&again.reports).unwrap();
    let rows_same = zeroed(&first.reports) == zeroed(&again.reports);
    let params_same = first
        .trained
        .model
        .flat()
        .iter()
        .map(|v| v.to_bits())
        .eq(again.trained.model.flat().iter().map(|v| v.to_bits()));
    Outcome {
        id: 9,
        pass: csv_same && json_same && rows_same && params_same,
        detail: format!("metrics CSV identical {csv_same}, JSON identical {json_same}, parameters identical {params_same}"),
    }
}

#[test]
fn acceptance() {
    let started = Instant::now();
    let mut outcomes = Vec::new();

    let t = Instant::now();
    let mut unit = Checks::default();
    criterion_1(&mut unit);
    let unit_secs = t.elapsed().as_secs_f64();
    outcomes.push(criterion_2());

    let config = bench_config();
    let shared: Vec<SplitOutcome> = SEEDS.iter().map(|&s| run(s, 0.5, &config)).collect();

    // The training-loss example is measured on the same synthetic runs.
    for o in &shared {
        let traj = &o.trained.trajectory;
        let (first, last) = (traj[0].l_quantile, traj[traj.len() - 1].l_quantile);
        unit.check(
            last < 0.5 * first,
            format!("L_quantile {first:.4} -> {last:.4}"),
        );
    }
    outcomes.push(Outcome {
        id: 1,
        pass: unit.failed.is_empty() && unit_secs < 60.0,
        detail: format!("{:.1}s; failures: {:?}", unit_secs, unit.failed),
    });

    outcomes.push(criterion_3(&shared));
    outcomes.push(criterion_4(&shared[0]));
    outcomes.push(criterion_5(&shared));

    let high: Vec<(f64, Vec<SplitOutcome>)> = [0.7, 0.9]
        .iter()
        .map(|&rate| (rate, SEEDS.iter().map(|&s| run(s, rate, &config)).collect()))
        .collect();
    let mut by_rate: Vec<(f64, &[SplitOutcome])> = vec![(0.5, &shared)];
    by_rate.extend(high.iter().map(|(r, o)| (*r, o.as_slice())));
    let c6 = criterion_6(&by_rate);
    outcomes.push(c6);

    let full_cfg = TrainConfig {
        ensemble_mode: EnsembleMode::FullEnsemble,
        ..config.clone()
    };
    let full: Vec<SplitOutcome> = SEEDS.iter().map(|&s| run(s, 0.5, &full_cfg)).collect();
    outcomes.push(criterion_7(&shared, &full));

    let no_decay = TrainConfig {
        use_decay: false,
        ..config.clone()
    };
    let ablated: Vec<SplitOutcome> = SEEDS.iter().map(|&s| run(s, 0.5, &no_decay)).collect();
    outcomes.push(criterion_8(&shared, &ablated));

    outcomes.push(criterion_9(&shared[0]));

    outcomes.sort_by_key(|o| o.id);
    emit!("");
    for o in &outcomes {
        emit!(
            "criterion {}: {} - {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    emit!(
        "acceptance wall time {:.0}s",
        started.elapsed().as_secs_f64()
    );
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
