use crate::data::TimeSeriesDataset;
use crate::error::{ImputeError, Result};

fn observed_steps(ds: &TimeSeriesDataset, k: usize) -> Result<Vec<usize>> {
    let steps: Vec<usize> = (0..ds.n_steps()).filter(|&t| ds.observed(t, k)).collect();
    if steps.is_empty() {
        return Err(ImputeError::EmptyFeature(ds.feature_names()[k].clone()));
    }
    Ok(steps)
}

/// Carries the last observation forward; a leading gap takes the first observation.
pub fn forward_fill(ds: &TimeSeriesDataset) -> Result<Vec<f64>> {
    let (t_total, n_feat) = (ds.n_steps(), ds.n_features());
    let mut out = ds.values().to_vec();
    for k in 0..n_feat {
        let first = observed_steps(ds, k)?[0];
        let mut last = ds.value(first, k);
        for t in 0..t_total {
            if ds.observed(t, k) {
                last = ds.value(t, k);
            }
            out[t * n_feat + k] = last;
        }
    }
    Ok(out)
}

/// Linear interpolation on the timestamp axis; boundary gaps are held flat.
pub fn linear_interpolate(ds: &TimeSeriesDataset) -> Result<Vec<f64>> {
    let (t_total, n_feat) = (ds.n_steps(), ds.n_features());
    let ts = ds.timestamps();
    let mut out = ds.values().to_vec();
    for k in 0..n_feat {
        let obs = observed_steps(ds, k)?;
        let mut next = 0;
        for t in 0..t_total {
            while next < obs.len() && obs[next] < t {
                next += 1;
            }
            let v = if next < obs.len() && obs[next] == t {
                ds.value(t, k)
            } else if next == 0 {
                ds.value(obs[0], k)
            } else if next == obs.len() {
                ds.value(obs[obs.len() - 1], k)
            } else {
                let (a, b) = (obs[next - 1], obs[next]);
                let w = (ts[t] - ts[a]) / (ts[b] - ts[a]);
                ds.value(a, k) + w * (ds.value(b, k) - ds.value(a, k))
            };
            out[t * n_feat + k] = v;
        }
    }
    Ok(out)
}

/// Per-feature observed mean and population variance.
pub fn feature_moments(ds: &TimeSeriesDataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_feat = ds.n_features();
    let mut means = Vec::with_capacity(n_feat);
    let mut vars = Vec::with_capacity(n_feat);
    for k in 0..n_feat {
        let obs = observed_steps(ds, k)?;
        let n = obs.len() as f64;
        let m = obs.iter().map(|&t| ds.value(t, k)).sum::<f64>() / n;
        let v = obs
            .iter()
            .map(|&t| (ds.value(t, k) - m).powi(2))
            .sum::<f64>()
            / n;
        means.push(m);
        vars.push(v);
    }
    Ok((means, vars))
}

/// Fills every missing cell with its feature's observed mean.
pub fn mean_impute(ds: &TimeSeriesDataset) -> Result<Vec<f64>> {
    let (means, _) = feature_moments(ds)?;
    Ok(fill_with(ds, &means))
}

/// Gaussian predictive with the feature's observed mean and variance at every missing cell.
pub fn naive_gaussian(ds: &TimeSeriesDataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let (means, vars) = feature_moments(ds)?;
    let mean = fill_with(ds, &means);
    let n_feat = ds.n_features();
    let var = (0..mean.len())
        .map(|i| if ds.mask()[i] { 0.0 } else { vars[i % n_feat] })
        .collect();
    Ok((mean, var))
}

fn fill_with(ds: &TimeSeriesDataset, per_feature: &[f64]) -> Vec<f64> {
    let n_feat = ds.n_features();
    ds.values()
        .iter()
        .zip(ds.mask())
        .enumerate()
        .map(|(i, (&v, &m))| if m { v } else { per_feature[i % n_feat] })
        .collect()
}
