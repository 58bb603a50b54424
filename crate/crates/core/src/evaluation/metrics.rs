use serde::{Deserialize, Serialize};

use crate::error::{ImputeError, Result};
use crate::quantile::{normal_quantile, pinball, predictive_quantile};

/// Fixed CRPS evaluation grid: 0.05, 0.10, ..., 0.95.
pub fn crps_grid() -> Vec<f64> {
    (1..=19).map(|j| j as f64 / 20.0).collect()
}

/// Quadrature rule used to turn grid pinball losses into a CRPS estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrpsEstimator {
    /// Simpson's rule over the grid plus exact Gaussian tail integrals.
    #[default]
    GridQuadrature,
    /// Plain mean of `2 * pinball` over the grid.
    GridMean,
}

impl CrpsEstimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GridQuadrature => "grid_quadrature",
            Self::GridMean => "grid_mean",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrpsOptions {
    pub estimator: CrpsEstimator,
    /// Divide by mean |truth| over the eval set.
    pub normalize_by_truth: bool,
}

/// Mean absolute error over cells where `eval_mask` is set.
pub fn masked_mae(pred: &[f64], truth: &[f64], eval_mask: &[bool]) -> Result<f64> {
    check_lengths(pred.len(), truth.len(), eval_mask.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() {
        if eval_mask[i] {
            sum += (pred[i] - truth[i]).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(ImputeError::EmptyEvalSet);
    }
    Ok(sum / n as f64)
}

fn check_lengths(a: usize, b: usize, c: usize) -> Result<()> {
    if a != b || a != c {
        return Err(ImputeError::Shape(format!(
            "length mismatch: {a}, {b}, {c}"
        )));
    }
    Ok(())
}

fn check_var(var: f64) -> Result<()> {
    if var < 0.0 || var.is_nan() {
        return Err(ImputeError::InvalidArgument(format!(
            "negative predictive variance {var}"
        )));
    }
    Ok(())
}

/// Mean of `2 * pinball(x, F^-1(q_j), q_j)` over `levels`.
pub fn crps_grid_mean(mean: f64, var: f64, x: f64, levels: &[f64]) -> Result<f64> {
    check_var(var)?;
    if levels.is_empty() {
        return Err(ImputeError::InvalidArgument("empty CRPS grid".into()));
    }
    let sum: f64 = levels
        .iter()
        .map(|&q| 2.0 * pinball(x, predictive_quantile(mean, var, q), q))
        .sum();
    Ok(sum / levels.len() as f64)
}

fn std_normal_pdf(s: f64) -> f64 {
    if s.is_infinite() {
        return 0.0;
    }
    (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via a Chebyshev-fitted erfc (relative error < 1.2e-7).
pub fn std_normal_cdf(s: f64) -> f64 {
    if s == f64::INFINITY {
        return 1.0;
    }
    if s == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-s / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98
                                    + t * (1.488_515_87
                                        + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

// Antiderivatives in standardized units s, with c the standardized truth.
// A' = Phi*phi, B' = s*Phi*phi.
fn anti_a(s: f64) -> f64 {
    let p = std_normal_cdf(s);
    0.5 * p * p
}

fn anti_b(s: f64) -> f64 {
    -std_normal_pdf(s) * std_normal_cdf(s)
        + std_normal_cdf(std::f64::consts::SQRT_2 * s) / (2.0 * std::f64::consts::PI.sqrt())
}

// s <= c branch: 2 * Phi(s) * (c - s) * phi(s)
fn below(s: f64, c: f64) -> f64 {
    2.0 * (c * anti_a(s) - anti_b(s))
}

// s > c branch: 2 * (1 - Phi(s)) * (s - c) * phi(s)
fn above(s: f64, c: f64) -> f64 {
    2.0 * ((-std_normal_pdf(s) - c * std_normal_cdf(s)) - (anti_b(s) - c * anti_a(s)))
}

fn tail_segment(s1: f64, s2: f64, c: f64) -> f64 {
    let mut total = 0.0;
    if s1 < c {
        let hi = s2.min(c);
        total += below(hi, c) - below(s1, c);
    }
    if s2 > c {
        let lo = s1.max(c);
        total += above(s2, c) - above(lo, c);
    }
    total
}

/// CRPS of one Gaussian predictive from the 19-level grid: Simpson's rule on
/// [0.05, 0.95] and exact integrals over the two tails.
pub fn crps_grid_quadrature(mean: f64, var: f64, x: f64) -> Result<f64> {
    check_var(var)?;
    if var == 0.0 {
        return Ok((x - mean).abs());
    }
    let sigma = var.sqrt();
    let grid = crps_grid();
    let h = 0.05;
    let last = grid.len() - 1;
    let mut inner = 0.0;
    for (j, &q) in grid.iter().enumerate() {
        let w = if j == 0 || j == last {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        inner += w * 2.0 * pinball(x, predictive_quantile(mean, var, q), q);
    }
    inner *= h / 3.0;
    let c = (x - mean) / sigma;
    let lo = normal_quantile(grid[0]);
    let hi = normal_quantile(grid[last]);
    let tails = tail_segment(f64::NEG_INFINITY, lo, c) + tail_segment(hi, f64::INFINITY, c);
    Ok(inner + sigma * tails)
}

/// CRPS averaged over the eval set. `mean` and `var` describe the Gaussian
/// predictive at every cell.
pub fn crps_discrete(
    mean: &[f64],
    var: &[f64],
    truth: &[f64],
    eval_mask: &[bool],
    opts: CrpsOptions,
) -> Result<f64> {
    check_lengths(mean.len(), var.len(), truth.len())?;
    check_lengths(mean.len(), eval_mask.len(), truth.len())?;
    let grid = crps_grid();
    let mut sum = 0.0;
    let mut abs_truth = 0.0;
    let mut n = 0usize;
    for i in 0..mean.len() {
        if !eval_mask[i] {
            continue;
        }
        sum += match opts.estimator {
            CrpsEstimator::GridQuadrature => crps_grid_quadrature(mean[i], var[i], truth[i])?,
            CrpsEstimator::GridMean => crps_grid_mean(mean[i], var[i], truth[i], &grid)?,
        };
        abs_truth += truth[i].abs();
        n += 1;
    }
    if n == 0 {
        return Err(ImputeError::EmptyEvalSet);
    }
    let crps = sum / n as f64;
    if opts.normalize_by_truth {
        let denom = abs_truth / n as f64;
        if denom == 0.0 {
            return Err(ImputeError::InvalidArgument("mean |truth| is zero".into()));
        }
        return Ok(crps / denom);
    }
    Ok(crps)
}

/// Mean pinball loss of the predictive quantile at each of `levels`.
pub fn per_quantile_pinball(
    mean: &[f64],
    var: &[f64],
    truth: &[f64],
    eval_mask: &[bool],
    levels: &[f64],
) -> Result<Vec<f64>> {
    check_lengths(mean.len(), var.len(), truth.len())?;
    let mut out = vec![0.0; levels.len()];
    let mut n = 0usize;
    for i in 0..mean.len() {
        if !eval_mask[i] {
            continue;
        }
        check_var(var[i])?;
        for (o, &q) in out.iter_mut().zip(levels) {
            *o += pinball(truth[i], predictive_quantile(mean[i], var[i], q), q);
        }
        n += 1;
    }
    if n == 0 {
        return Err(ImputeError::EmptyEvalSet);
    }
    for o in &mut out {
        *o /= n as f64;
    }
    Ok(out)
}
