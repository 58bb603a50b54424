//! Finite-difference verification of the analytic gradient.

use super::loss::{loss_and_grad, total_loss, LossWeights};
use crate::data::Window;
use crate::error::Result;
use crate::model::ImputerModel;

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_error: f64,
    pub compared: usize,
    /// Both gradients below the activity threshold.
    pub inactive: usize,
    /// A kink of a pinball, absolute-value or max term lies inside the stencil.
    pub kinks: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_error: f64,
    pub compared: usize,
    pub inactive: usize,
    pub kinks: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.compared > 0 && self.max_rel_error < self.tolerance
    }
}

/// Compares analytic gradients with central differences of step `eps`.
///
/// Each coordinate is also differenced with step `eps / 4`; when the two
/// estimates disagree the loss is not smooth inside the stencil and the
/// coordinate is excluded as a kink.
#[allow(clippy::needless_range_loop)]
pub fn grad_check(
    model: &ImputerModel,
    window: &Window,
    weights: &LossWeights,
    eps: f64,
    tolerance: f64,
    activity: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = loss_and_grad(window, model, weights)?;
    let analytic = grads.flat();
    let names: Vec<(String, usize)> = model
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    let theta = model.flat();
    let mut probe = model.clone();
    let mut central = |idx: usize, h: f64| -> Result<f64> {
        let mut shifted = theta.clone();
        shifted[idx] = theta[idx] + h;
        probe.set_flat(&shifted);
        let plus = total_loss(window, &probe, weights)?.total;
        shifted[idx] = theta[idx] - h;
        probe.set_flat(&shifted);
        let minus = total_loss(window, &probe, weights)?.total;
        Ok((plus - minus) / (2.0 * h))
    };

    let mut groups = Vec::with_capacity(names.len());
    let mut offset = 0;
    for (name, len) in names {
        let mut report = GroupReport {
            name,
            max_rel_error: 0.0,
            compared: 0,
            inactive: 0,
            kinks: 0,
        };
        for idx in offset..offset + len {
            let numeric = central(idx, eps)?;
            let a = analytic[idx];
            if a.abs() < activity && numeric.abs() < activity {
                report.inactive += 1;
                continue;
            }
            let fine = central(idx, eps / 4.0)?;
            let scale = numeric.abs().max(fine.abs()).max(activity);
            if (numeric - fine).abs() / scale > 0.1 * tolerance {
                report.kinks += 1;
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            report.max_rel_error = report.max_rel_error.max(rel);
            report.compared += 1;
        }
        offset += len;
        groups.push(report);
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        compared: groups.iter().map(|g| g.compared).sum(),
        inactive: groups.iter().map(|g| g.inactive).sum(),
        kinks: groups.iter().map(|g| g.kinks).sum(),
        groups,
        tolerance,
    })
}
