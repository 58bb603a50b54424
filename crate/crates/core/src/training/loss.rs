use crate::data::Window;
use crate::error::{ImputeError, Result};
use crate::model::{
    abs_grad, combine_member, directional_backward, own_loss_seeds, ImputerModel, MemberPasses,
    StepSeeds,
};
use crate::quantile::{pinball, pinball_grad};

/// Weights of the auxiliary loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_consistency: f64,
    pub aux_nll_weight: f64,
    pub var_floor: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_consistency: 0.1,
            aux_nll_weight: 0.0,
            var_floor: 1e-6,
        }
    }
}

/// Loss over one window, summed over members and directions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub l1: f64,
    pub l2: f64,
    pub quantile: f64,
    pub consistency: f64,
    /// Heteroscedastic Gaussian NLL of the combined heads at observed cells.
    /// Unlike the others it may be negative.
    pub nll: f64,
    pub total: f64,
    pub empty_support: bool,
}

impl LossComponents {
    pub fn accumulate(&mut self, other: &LossComponents) {
        self.l1 += other.l1;
        self.l2 += other.l2;
        self.quantile += other.quantile;
        self.consistency += other.consistency;
        self.nll += other.nll;
        self.total += other.total;
        self.empty_support &= other.empty_support;
    }

    pub fn scale(&mut self, s: f64) {
        self.l1 *= s;
        self.l2 *= s;
        self.quantile *= s;
        self.consistency *= s;
        self.nll *= s;
        self.total *= s;
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [
            ("L1", self.l1),
            ("L2", self.l2),
            ("L_quantile", self.quantile),
            ("L_consistency", self.consistency),
            ("L_nll", self.nll),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Err(ImputeError::NonFiniteLoss(name));
            }
        }
        Ok(())
    }
}

/// Loss of `model` on `window`.
pub fn total_loss(
    window: &Window,
    model: &ImputerModel,
    weights: &LossWeights,
) -> Result<LossComponents> {
    let passes = model.run_window(window)?;
    let (loss, _) = evaluate(window, model, &passes, weights, false)?;
    Ok(loss)
}

/// Loss of `model` on `window` together with its gradient.
pub fn loss_and_grad(
    window: &Window,
    model: &ImputerModel,
    weights: &LossWeights,
) -> Result<(LossComponents, ImputerModel)> {
    let passes = model.run_window(window)?;
    let (loss, seeds) = evaluate(window, model, &passes, weights, true)?;
    let seeds = seeds.expect("seeds requested");
    let mut grads = model.zeros_like();
    let reversed = model.spec.directions.backward().then(|| window.reversed());
    for (j, (member, p)) in model.members.iter().zip(&passes).enumerate() {
        let (fs, bs) = &seeds[j];
        let g = &mut grads.members[j];
        if let (Some(pass), Some(s)) = (&p.forward, fs) {
            directional_backward(
                window,
                &member.forward,
                pass,
                s,
                model.spec.use_decay,
                &mut g.forward,
            );
        }
        if let (Some(pass), Some(s), Some(rw)) = (&p.backward, bs, &reversed) {
            directional_backward(
                rw,
                &member.backward,
                pass,
                s,
                model.spec.use_decay,
                &mut g.backward,
            );
        }
    }
    Ok((loss, grads))
}

type MemberSeeds = (Option<StepSeeds>, Option<StepSeeds>);

fn evaluate<'a>(
    window: &Window,
    model: &'a ImputerModel,
    passes: &'a [MemberPasses],
    weights: &LossWeights,
    want_seeds: bool,
) -> Result<(LossComponents, Option<Vec<MemberSeeds>>)> {
    let len = window.len;
    let k = window.n_features;
    let both = model.spec.directions.forward() && model.spec.directions.backward();
    let mut loss = LossComponents {
        empty_support: true,
        ..LossComponents::default()
    };
    let mut seeds: Vec<MemberSeeds> = Vec::new();
    let mut combined_hat: Vec<Vec<f64>> = Vec::new();
    let reversed = model.spec.directions.backward().then(|| window.reversed());

    for (member, p) in model.members.iter().zip(passes) {
        let n_heads = member.levels.len();
        let mut fs = None;
        let mut bs = None;
        for (pass, slot, w) in [
            (&p.forward, &mut fs, Some(window)),
            (&p.backward, &mut bs, reversed.as_ref()),
        ] {
            if let (Some(pass), Some(w)) = (pass, w) {
                loss.l1 += pass.loss.l1;
                loss.l2 += pass.loss.l2;
                loss.quantile += pass.loss.quantile;
                loss.empty_support &= pass.empty_support();
                if want_seeds {
                    let mut s = StepSeeds::zeros(len, k, n_heads);
                    own_loss_seeds(w, pass, &member.levels, 1.0, &mut s);
                    *slot = Some(s);
                }
            }
        }
        let combined = combine_member(p, len, k)?;
        if both && len > 0 {
            loss.consistency += combined.consistency;
            if want_seeds && weights.lambda_consistency != 0.0 {
                let (f, b) = (p.forward.as_ref().unwrap(), p.backward.as_ref().unwrap());
                let scale = weights.lambda_consistency / (len * k) as f64;
                let (fseed, bseed) = (fs.as_mut().unwrap(), bs.as_mut().unwrap());
                for t in 0..len {
                    let rt = len - 1 - t;
                    for j in 0..k {
                        let g = scale * abs_grad(f.steps[t].v_mean[j] - b.steps[rt].v_mean[j]);
                        fseed.v_mean[t * k + j] += g;
                        bseed.v_mean[rt * k + j] -= g;
                    }
                }
            }
        }
        combined_hat.extend(combined.heads_hat);
        seeds.push((fs, bs));
    }

    // heteroscedastic likelihood over the combined heads at observed cells
    let levels = model.spec.levels.as_slice();
    let n = levels.len() as f64;
    let n_obs = window.mask[..len * k].iter().filter(|&&m| m > 0.5).count();
    let want_nll_seeds = want_seeds && weights.aux_nll_weight != 0.0 && n_obs > 0;
    let mut d_combined = if want_nll_seeds {
        vec![vec![0.0; len * k]; combined_hat.len()]
    } else {
        Vec::new()
    };
    if n_obs > 0 {
        let mut nll_sum = 0.0;
        for idx in 0..len * k {
            if window.mask[idx] <= 0.5 {
                continue;
            }
            let x = window.values[idx];
            let vals: Vec<f64> = combined_hat.iter().map(|h| h[idx]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let floored = var < weights.var_floor;
            let s2 = var.max(weights.var_floor);
            let lbar = vals
                .iter()
                .zip(levels)
                .map(|(&v, &q)| pinball(x, v, q))
                .sum::<f64>()
                / n;
            nll_sum += 0.5 * s2.ln() + lbar / (2.0 * s2);
            if want_nll_seeds {
                let scale = weights.aux_nll_weight / n_obs as f64;
                let d_lbar = 1.0 / (2.0 * s2);
                let d_s2 = if floored {
                    0.0
                } else {
                    0.5 / s2 - lbar / (2.0 * s2 * s2)
                };
                for (i, (&v, &q)) in vals.iter().zip(levels).enumerate() {
                    let g = d_lbar * pinball_grad(x, v, q) / n + d_s2 * 2.0 * (v - mean) / n;
                    d_combined[i][idx] = scale * g;
                }
            }
        }
        loss.nll = nll_sum / n_obs as f64;
    }

    if want_nll_seeds {
        let share = if both { 0.5 } else { 1.0 };
        let mut head = 0;
        for (member, (fs, bs)) in model.members.iter().zip(seeds.iter_mut()) {
            for i in 0..member.levels.len() {
                let d = &d_combined[head + i];
                if let Some(s) = fs.as_mut() {
                    for (a, g) in s.v_hat[i].iter_mut().zip(d) {
                        *a += share * g;
                    }
                }
                if let Some(s) = bs.as_mut() {
                    for t in 0..len {
                        let rt = len - 1 - t;
                        for j in 0..k {
                            s.v_hat[i][rt * k + j] += share * d[t * k + j];
                        }
                    }
                }
            }
            head += member.levels.len();
        }
    }

    loss.total = loss.l1
        + loss.l2
        + loss.quantile
        + weights.lambda_consistency * loss.consistency
        + weights.aux_nll_weight * loss.nll;
    loss.check()?;
    Ok((loss, want_seeds.then_some(seeds)))
}
