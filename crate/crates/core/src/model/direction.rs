//! Forward procedure of one directional imputer over a window, and its
//! reverse-mode gradient.

use super::lstm::{recurrent_step, recurrent_step_backward, LstmCache, RecurrentState};
use super::params::ImputerParams;
use super::step::{
    complement, feature_regress, head_combine, history_regress, replace, temporal_decay,
};
use crate::data::Window;
use crate::error::{ImputeError, Result};
use crate::quantile::{pinball, QuantileLevels};

/// Intermediate quantities of one time step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub x_hist: Vec<f64>,
    pub x_complement: Vec<f64>,
    pub z_feat: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Pre-activation `W_γ δ` (before the max), kept for backprop.
    pub decay_pre: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub v_hat: Vec<Vec<f64>>,
    pub v_heads: Vec<Vec<f64>>,
    pub v_mean: Vec<f64>,
}

/// Per-direction loss components over a window.
///
/// `l1` is the masked MAE of the history estimate, `l2` of the feature
/// estimate, `quantile` the masked quantile loss of the head estimates,
/// each normalized by the observed count (and the head count for `quantile`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DirectionLoss {
    pub l1: f64,
    pub l2: f64,
    pub quantile: f64,
}

impl DirectionLoss {
    pub fn total(&self) -> f64 {
        self.l1 + self.l2 + self.quantile
    }
}

/// Everything a directional pass produces.
#[derive(Clone, Debug)]
pub struct DirectionalPass {
    pub steps: Vec<StepOutput>,
    pub caches: Vec<LstmCache>,
    /// Unnormalized per-step sums of the three loss terms.
    pub step_terms: Vec<[f64; 3]>,
    pub n_observed: usize,
    pub loss: DirectionLoss,
}

impl DirectionalPass {
    pub fn empty_support(&self) -> bool {
        self.n_observed == 0
    }
}

/// Runs the imputer over the valid steps of `window` in time order.
///
/// When `use_decay` is false, `γ ≡ 1`.
pub fn directional_pass(
    window: &Window,
    params: &ImputerParams,
    levels: &QuantileLevels,
    use_decay: bool,
) -> Result<DirectionalPass> {
    let k = params.n_features;
    if window.n_features != k {
        return Err(ImputeError::Shape(format!(
            "window has {} features, imputer expects {k}",
            window.n_features
        )));
    }
    if levels.len() != params.n_heads() {
        return Err(ImputeError::Shape(format!(
            "{} quantile levels for {} heads",
            levels.len(),
            params.n_heads()
        )));
    }
    let n_heads = params.n_heads();
    let w_gamma = params.w_gamma();
    let w_z = params.w_z_masked();
    let zeros_k = vec![0.0; k];

    let mut state = RecurrentState::zeros(params.hidden);
    let mut steps = Vec::with_capacity(window.len);
    let mut caches = Vec::with_capacity(window.len);
    let mut step_terms = Vec::with_capacity(window.len);
    let mut n_observed = 0usize;

    for t in 0..window.len {
        let x = window.x(t);
        let m = window.m(t);
        let x_hist = history_regress(&state, params);
        check(&x_hist, t, "history_regress")?;
        let x_complement = complement(x, m, &x_hist);
        let (gamma, decay_pre) = if use_decay {
            let pre = w_gamma.affine(window.d(t), &zeros_k);
            (temporal_decay(window.d(t), &w_gamma, &params.b_gamma), pre)
        } else {
            (vec![1.0; k], zeros_k.clone())
        };
        check(&gamma, t, "temporal_decay")?;
        let z_feat = feature_regress(&x_complement, &w_z, &params.b_z);
        check(&z_feat, t, "feature_regress")?;

        let mut beta = Vec::with_capacity(n_heads);
        let mut v_hat = Vec::with_capacity(n_heads);
        let mut v_heads = Vec::with_capacity(n_heads);
        for head in &params.heads {
            let (vh, b) = head_combine(&z_feat, &x_hist, &gamma, m, head);
            v_heads.push(replace(x, m, &vh));
            v_hat.push(vh);
            beta.push(b);
        }
        let mut v_mean = vec![0.0; k];
        for v in &v_heads {
            for (acc, &vi) in v_mean.iter_mut().zip(v) {
                *acc += vi;
            }
        }
        v_mean.iter_mut().for_each(|v| *v /= n_heads as f64);
        check(&v_mean, t, "head_combine")?;

        let mut terms = [0.0; 3];
        for j in 0..k {
            if m[j] > 0.5 {
                n_observed += 1;
                terms[0] += (x_hist[j] - x[j]).abs();
                terms[1] += (z_feat[j] - x[j]).abs();
                for (vh, &q) in v_hat.iter().zip(levels.as_slice()) {
                    terms[2] += pinball(x[j], vh[j], q);
                }
            }
        }
        step_terms.push(terms);

        let (next, cache) = recurrent_step(&v_mean, &state, &params.lstm);
        check(&next.h, t, "recurrent_step")?;
        check(&next.c, t, "recurrent_step")?;
        state = next;
        caches.push(cache);
        steps.push(StepOutput {
            x_hist,
            x_complement,
            z_feat,
            gamma,
            decay_pre,
            beta,
            v_hat,
            v_heads,
            v_mean,
        });
    }

    let loss = if n_observed == 0 {
        DirectionLoss::default()
    } else {
        let n = n_observed as f64;
        let sum = |i: usize| step_terms.iter().map(|s| s[i]).sum::<f64>();
        DirectionLoss {
            l1: sum(0) / n,
            l2: sum(1) / n,
            quantile: sum(2) / (n * n_heads as f64),
        }
    };
    Ok(DirectionalPass {
        steps,
        caches,
        step_terms,
        n_observed,
        loss,
    })
}

fn check(v: &[f64], step: usize, stage: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ImputeError::NonFinite { step, stage })
    }
}

/// Upstream gradients injected at each step of a directional pass.
///
/// All per-step blocks are laid out `t * K + k`; `v_hat[i]` is per head.
#[derive(Clone, Debug)]
pub struct StepSeeds {
    pub x_hist: Vec<f64>,
    pub z_feat: Vec<f64>,
    pub v_hat: Vec<Vec<f64>>,
    pub v_mean: Vec<f64>,
}

impl StepSeeds {
    pub fn zeros(n_steps: usize, n_features: usize, n_heads: usize) -> Self {
        let n = n_steps * n_features;
        StepSeeds {
            x_hist: vec![0.0; n],
            z_feat: vec![0.0; n],
            v_hat: vec![vec![0.0; n]; n_heads],
            v_mean: vec![0.0; n],
        }
    }
}

/// Seeds for the pass's own normalized L1 + L2 + quantile terms, scaled by `weight`.
pub fn own_loss_seeds(
    window: &Window,
    pass: &DirectionalPass,
    levels: &QuantileLevels,
    weight: f64,
    seeds: &mut StepSeeds,
) {
    if pass.n_observed == 0 {
        return;
    }
    let k = window.n_features;
    let n = pass.n_observed as f64;
    let n_heads = levels.len() as f64;
    for (t, step) in pass.steps.iter().enumerate() {
        let x = window.x(t);
        let m = window.m(t);
        for j in 0..k {
            if m[j] <= 0.5 {
                continue;
            }
            let idx = t * k + j;
            seeds.x_hist[idx] += weight * abs_grad(step.x_hist[j] - x[j]) / n;
            seeds.z_feat[idx] += weight * abs_grad(step.z_feat[j] - x[j]) / n;
            for (i, &q) in levels.as_slice().iter().enumerate() {
                seeds.v_hat[i][idx] += weight
                    * crate::quantile::pinball_grad(x[j], step.v_hat[i][j], q)
                    / (n * n_heads);
            }
        }
    }
}

#[inline]
pub(crate) fn abs_grad(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Reverse-mode sweep over a directional pass, accumulating into `grads`.
pub fn directional_backward(
    window: &Window,
    params: &ImputerParams,
    pass: &DirectionalPass,
    seeds: &StepSeeds,
    use_decay: bool,
    grads: &mut ImputerParams,
) {
    let k = params.n_features;
    let hd = params.hidden;
    let n_heads = params.n_heads();
    let w_z = params.w_z_masked();

    let mut d_h = vec![0.0; hd];
    let mut d_c = vec![0.0; hd];
    let mut d_w_gamma = vec![0.0; k * k];

    for t in (0..pass.steps.len()).rev() {
        let step = &pass.steps[t];
        let cache = &pass.caches[t];
        let m = window.m(t);
        let x_co = &step.x_complement;

        let back = recurrent_step_backward(cache, &d_h, &d_c, &params.lstm, &mut grads.lstm);
        d_c = back.d_c_prev;
        let mut d_h_prev = back.d_h_prev;

        let mut d_v_mean = back.d_input;
        for (d, s) in d_v_mean.iter_mut().zip(&seeds.v_mean[t * k..(t + 1) * k]) {
            *d += s;
        }

        let mut d_x_hist: Vec<f64> = seeds.x_hist[t * k..(t + 1) * k].to_vec();
        let mut d_z: Vec<f64> = seeds.z_feat[t * k..(t + 1) * k].to_vec();
        let mut d_gamma = vec![0.0; k];
        let head_input: Vec<f64> = step.gamma.iter().chain(m).copied().collect();

        for i in 0..n_heads {
            let beta = &step.beta[i];
            let mut d_pre = vec![0.0; k];
            for j in 0..k {
                let d_v = d_v_mean[j] / n_heads as f64;
                let d_v_hat = seeds.v_hat[i][t * k + j] + (1.0 - m[j]) * d_v;
                if d_v_hat == 0.0 {
                    continue;
                }
                let d_beta = d_v_hat * (step.z_feat[j] - step.x_hist[j]);
                d_z[j] += d_v_hat * beta[j];
                d_x_hist[j] += d_v_hat * (1.0 - beta[j]);
                d_pre[j] = d_beta * beta[j] * (1.0 - beta[j]);
            }
            let head = &params.heads[i];
            let g = &mut grads.heads[i];
            g.w_beta.add_outer(&d_pre, &head_input);
            for (b, d) in g.b_beta.iter_mut().zip(&d_pre) {
                *b += d;
            }
            if use_decay {
                for (r, &dp) in d_pre.iter().enumerate() {
                    if dp == 0.0 {
                        continue;
                    }
                    for (dg, w) in d_gamma.iter_mut().zip(&head.w_beta.row(r)[..k]) {
                        *dg += w * dp;
                    }
                }
            }
        }

        if use_decay {
            let delta = window.d(t);
            let mut d_s = vec![0.0; k];
            for j in 0..k {
                let dg = d_gamma[j] * step.gamma[j];
                grads.b_gamma[j] += dg;
                if step.decay_pre[j] > 0.0 {
                    d_s[j] = -dg;
                }
            }
            for (r, &ds) in d_s.iter().enumerate() {
                if ds == 0.0 {
                    continue;
                }
                for (c, &dl) in delta.iter().enumerate() {
                    d_w_gamma[r * k + c] += ds * dl;
                }
            }
        }

        grads.w_z.add_outer(&d_z, x_co);
        for (b, d) in grads.b_z.iter_mut().zip(&d_z) {
            *b += d;
        }
        let mut d_x_co = vec![0.0; k];
        w_z.add_transpose_mul(&d_z, &mut d_x_co);
        for j in 0..k {
            d_x_hist[j] += (1.0 - m[j]) * d_x_co[j];
        }

        grads.w_x.add_outer(&d_x_hist, &cache.h_prev);
        for (b, d) in grads.b_x.iter_mut().zip(&d_x_hist) {
            *b += d;
        }
        params.w_x.add_transpose_mul(&d_x_hist, &mut d_h_prev);
        d_h = d_h_prev;
    }

    for j in 0..k {
        grads.w_z.set(j, j, 0.0);
    }
    if use_decay {
        // chain through the softplus reparameterization
        for ((g, &raw), &dw) in grads
            .w_gamma_raw
            .data
            .iter_mut()
            .zip(&params.w_gamma_raw.data)
            .zip(&d_w_gamma)
        {
            *g += dw * crate::linalg::sigmoid(raw);
        }
    }
}
