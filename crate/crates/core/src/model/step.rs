//! The per-step building blocks of one directional imputer.

use super::lstm::RecurrentState;
use super::params::{HeadParams, ImputerParams};
use crate::linalg::{sigmoid, Matrix};

/// Provisional estimate from the previous hidden state: `W_x h + b_x`.
pub fn history_regress(state: &RecurrentState, params: &ImputerParams) -> Vec<f64> {
    params.w_x.affine(&state.h, &params.b_x)
}

/// Observed coordinates from `x`, the rest from `fill`.
pub fn complement(x: &[f64], m: &[f64], fill: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(m)
        .zip(fill)
        .map(|((&xv, &mv), &fv)| if mv > 0.5 { xv } else { fv })
        .collect()
}

/// Same coordinatewise rule as [`complement`], applied to a head estimate.
pub fn replace(x: &[f64], m: &[f64], v_hat: &[f64]) -> Vec<f64> {
    complement(x, m, v_hat)
}

/// `γ = exp(−max(0, W_γ δ) + b_γ)` with `W_γ` the effective (nonnegative) weights.
pub fn temporal_decay(delta: &[f64], w_gamma: &Matrix, b_gamma: &[f64]) -> Vec<f64> {
    let zeros = vec![0.0; delta.len()];
    w_gamma
        .affine(delta, &zeros)
        .iter()
        .zip(b_gamma)
        .map(|(&s, &b)| (-s.max(0.0) + b).exp())
        .collect()
}

/// `ẑ = W_z x_co + b_z` where `w_z_masked` has a zero diagonal.
pub fn feature_regress(x_complement: &[f64], w_z_masked: &Matrix, b_z: &[f64]) -> Vec<f64> {
    w_z_masked.affine(x_complement, b_z)
}

/// Combining weight and combined estimate of one head.
pub fn head_combine(
    z_feat: &[f64],
    x_hist: &[f64],
    gamma: &[f64],
    m: &[f64],
    head: &HeadParams,
) -> (Vec<f64>, Vec<f64>) {
    let input: Vec<f64> = gamma.iter().chain(m).copied().collect();
    let beta: Vec<f64> = head
        .w_beta
        .affine(&input, &head.b_beta)
        .into_iter()
        .map(sigmoid)
        .collect();
    let v_hat = beta
        .iter()
        .zip(z_feat)
        .zip(x_hist)
        .map(|((&b, &z), &xh)| b * z + (1.0 - b) * xh)
        .collect();
    (v_hat, beta)
}
