//! Pinball loss, Gaussian-mixture aggregation of ensemble members, the
//! heteroscedastic likelihood, and predictive quantiles.

use serde::{Deserialize, Serialize};

use crate::error::{ImputeError, Result};

/// Strictly increasing quantile levels in (0, 1), one per ensemble member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileLevels(Vec<f64>);

impl QuantileLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(ImputeError::InvalidArgument("no quantile levels".into()));
        }
        if levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(ImputeError::InvalidArgument(format!(
                "quantile levels must lie in (0,1): {levels:?}"
            )));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ImputeError::InvalidArgument(format!(
                "quantile levels must be strictly increasing: {levels:?}"
            )));
        }
        Ok(QuantileLevels(levels))
    }

    /// Five levels, `[0.1, 0.25, 0.5, 0.75, 0.9]`.
    pub fn q1() -> Self {
        QuantileLevels(vec![0.1, 0.25, 0.5, 0.75, 0.9])
    }

    /// Nine levels, `0.1..=0.9` step `0.1`.
    pub fn q2() -> Self {
        QuantileLevels(grid(1, 9, 10.0))
    }

    /// Nineteen levels, `0.05..=0.95` step `0.05`.
    pub fn q3() -> Self {
        QuantileLevels(grid(1, 19, 20.0))
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "Q1" | "q1" => Ok(Self::q1()),
            "Q2" | "q2" => Ok(Self::q2()),
            "Q3" | "q3" => Ok(Self::q3()),
            other => Err(ImputeError::InvalidArgument(format!(
                "unknown quantile preset '{other}'"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// A single-member set, used by the full-ensemble members.
    pub fn single(&self, i: usize) -> QuantileLevels {
        QuantileLevels(vec![self.0[i]])
    }
}

fn grid(from: u32, to: u32, denom: f64) -> Vec<f64> {
    (from..=to).map(|i| f64::from(i) / denom).collect()
}

impl TryFrom<Vec<f64>> for QuantileLevels {
    type Error = ImputeError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        QuantileLevels::new(v)
    }
}

impl From<QuantileLevels> for Vec<f64> {
    fn from(q: QuantileLevels) -> Self {
        q.0
    }
}

/// Quantile (pinball) loss.
///
/// `x` is the observation and `y` the estimate: `q·(x−y)` when `x ≥ y`, else
/// `(1−q)·(y−x)`. Minimizing the expectation over `y` gives the `q`-quantile of `x`.
#[inline]
pub fn pinball(x: f64, y: f64, q: f64) -> f64 {
    if x >= y {
        q * (x - y)
    } else {
        (1.0 - q) * (y - x)
    }
}

/// The same loss in max form: `q·max(x−y, 0) + (1−q)·max(0, y−x)`.
#[inline]
pub fn pinball_max_form(x: f64, y: f64, q: f64) -> f64 {
    q * (x - y).max(0.0).abs() + (1.0 - q) * (y - x).max(0.0).abs()
}

/// Derivative of [`pinball`] with respect to the estimate `y`. At `x == y` the
/// `x ≥ y` branch is taken.
#[inline]
pub fn pinball_grad(x: f64, y: f64, q: f64) -> f64 {
    if x >= y {
        -q
    } else {
        1.0 - q
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantileLoss {
    /// Sum over heads, steps and observed features.
    pub raw_sum: f64,
    /// `raw_sum / (N · #observed)`; 0 when nothing is observed.
    pub normalized: f64,
    pub n_observed: usize,
    pub empty_support: bool,
}

/// Masked quantile loss over `N` head estimates of a `T × K` block.
///
/// `heads[i]` holds the estimates of head `i` laid out like `x`.
pub fn masked_quantile_loss(
    x: &[f64],
    mask: &[f64],
    heads: &[Vec<f64>],
    levels: &QuantileLevels,
) -> Result<QuantileLoss> {
    if heads.len() != levels.len() {
        return Err(ImputeError::Shape(format!(
            "{} heads for {} quantile levels",
            heads.len(),
            levels.len()
        )));
    }
    if mask.len() != x.len() || heads.iter().any(|h| h.len() != x.len()) {
        return Err(ImputeError::Shape(
            "head or mask length differs from x".into(),
        ));
    }
    let n_observed = mask.iter().filter(|&&m| m > 0.5).count();
    let mut raw_sum = 0.0;
    for (head, &q) in heads.iter().zip(levels.as_slice()) {
        for ((&xv, &mv), &v) in x.iter().zip(mask).zip(head) {
            if mv > 0.5 {
                raw_sum += pinball(xv, v, q);
            }
        }
    }
    let normalized = if n_observed == 0 {
        0.0
    } else {
        raw_sum / (heads.len() * n_observed) as f64
    };
    Ok(QuantileLoss {
        raw_sum,
        normalized,
        n_observed,
        empty_support: n_observed == 0,
    })
}

/// Mean and variance of a uniform mixture: `u* = mean(u_i)`,
/// `σ*² = mean(σ_i² + u_i²) − u*²`, clamped at 0.
pub fn aggregate_mixture(member_means: &[f64], member_vars: &[f64]) -> Result<(f64, f64)> {
    if member_means.is_empty() {
        return Err(ImputeError::InvalidArgument(
            "mixture with zero members".into(),
        ));
    }
    if member_means.len() != member_vars.len() {
        return Err(ImputeError::Shape(
            "member means and variances differ in length".into(),
        ));
    }
    let n = member_means.len() as f64;
    let mean = member_means.iter().sum::<f64>() / n;
    let second = member_means
        .iter()
        .zip(member_vars)
        .map(|(u, v)| v + u * u)
        .sum::<f64>()
        / n;
    Ok((mean, (second - mean * mean).max(0.0)))
}

/// Heteroscedastic Gaussian negative log-likelihood with the pinball losses of
/// the members as the residual term. `agg_var` is floored at `var_floor`.
pub fn gaussian_nll(agg_var: f64, quantile_losses: &[f64], var_floor: f64) -> f64 {
    let var = agg_var.max(var_floor);
    let mean_loss = quantile_losses.iter().sum::<f64>() / quantile_losses.len().max(1) as f64;
    0.5 * var.ln() + mean_loss / (2.0 * var)
}

/// How member variances are obtained before mixing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Members are point estimates; the spread of the heads is the variance.
    #[default]
    HeadSpread,
    /// Least-squares fit of `u + σ·Φ⁻¹(q_i)` to the head outputs.
    FitGaussianToQuantiles,
}

impl VarianceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceMode::HeadSpread => "head_spread",
            VarianceMode::FitGaussianToQuantiles => "fit_gaussian_to_quantiles",
        }
    }
}

/// Predictive Gaussian `(mean, variance)` from the head outputs at one cell.
pub fn summarize_heads(heads: &[f64], levels: &QuantileLevels, mode: VarianceMode) -> (f64, f64) {
    match mode {
        VarianceMode::HeadSpread => {
            let zeros = vec![0.0; heads.len()];
            aggregate_mixture(heads, &zeros).unwrap_or((0.0, 0.0))
        }
        VarianceMode::FitGaussianToQuantiles => {
            let z: Vec<f64> = levels
                .as_slice()
                .iter()
                .map(|&q| normal_quantile(q))
                .collect();
            let n = heads.len() as f64;
            let z_mean = z.iter().sum::<f64>() / n;
            let v_mean = heads.iter().sum::<f64>() / n;
            let sxx: f64 = z.iter().map(|zi| (zi - z_mean).powi(2)).sum();
            if sxx == 0.0 {
                return (v_mean, 0.0);
            }
            let sxy: f64 = z
                .iter()
                .zip(heads)
                .map(|(zi, vi)| (zi - z_mean) * (vi - v_mean))
                .sum();
            let sigma = (sxy / sxx).max(0.0);
            (v_mean - sigma * z_mean, sigma * sigma)
        }
    }
}

/// `u* + σ*·Φ⁻¹(q)`.
pub fn predictive_quantile(agg_mean: f64, agg_var: f64, q: f64) -> f64 {
    if q == 0.5 {
        return agg_mean;
    }
    agg_mean + agg_var.max(0.0).sqrt() * normal_quantile(q)
}

/// Standard normal quantile function (Wichura's AS 241, ~1e-16 relative accuracy).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
