use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{deltas_from_parts, TimeSeriesDataset};

/// A contiguous slice of the series, padded to a fixed length.
///
/// Steps at index `len..n_steps` are padding: mask 0, value 0, `valid = false`.
/// Gaps restart at zero on the first step of the window.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub start: usize,
    pub n_steps: usize,
    pub len: usize,
    pub n_features: usize,
    pub values: Vec<f64>,
    pub mask: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub delta: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Window {
    /// Builds an unpadded window from raw parts.
    pub fn from_parts(values: Vec<f64>, mask: Vec<f64>, timestamps: Vec<f64>) -> Self {
        let t = timestamps.len();
        assert!(t > 0, "window needs at least one step");
        let k = values.len() / t;
        assert_eq!(values.len(), t * k);
        assert_eq!(mask.len(), t * k);
        let delta = deltas_from_parts(&timestamps, &mask, k);
        Window {
            start: 0,
            n_steps: t,
            len: t,
            n_features: k,
            values,
            mask,
            timestamps,
            delta,
            valid: vec![true; t],
        }
    }

    #[inline]
    pub fn x(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_features..(t + 1) * self.n_features]
    }

    #[inline]
    pub fn m(&self, t: usize) -> &[f64] {
        &self.mask[t * self.n_features..(t + 1) * self.n_features]
    }

    #[inline]
    pub fn d(&self, t: usize) -> &[f64] {
        &self.delta[t * self.n_features..(t + 1) * self.n_features]
    }

    /// The valid steps in reverse order, with gaps recomputed for the reversed sequence.
    pub fn reversed(&self) -> Window {
        let k = self.n_features;
        let mut values = Vec::with_capacity(self.len * k);
        let mut mask = Vec::with_capacity(self.len * k);
        let mut timestamps = Vec::with_capacity(self.len);
        for t in (0..self.len).rev() {
            values.extend_from_slice(self.x(t));
            mask.extend_from_slice(self.m(t));
            timestamps.push(self.timestamps[t]);
        }
        let mut w = Window::from_parts(values, mask, timestamps);
        w.start = self.start;
        w
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.5).count()
    }
}

/// Tiles the dataset into consecutive windows of `window_length` steps.
pub fn make_windows(dataset: &TimeSeriesDataset, window_length: usize) -> Vec<Window> {
    assert!(window_length >= 1, "window_length must be at least 1");
    let k = dataset.n_features();
    let t_total = dataset.n_steps();
    let mut out = Vec::new();
    let mut start = 0;
    while start < t_total {
        let len = window_length.min(t_total - start);
        let mut values = vec![0.0; window_length * k];
        let mut mask = vec![0.0; window_length * k];
        let mut timestamps = vec![0.0; window_length];
        let mut valid = vec![false; window_length];
        for t in 0..len {
            let src = start + t;
            timestamps[t] = dataset.timestamps()[src];
            valid[t] = true;
            for j in 0..k {
                if dataset.observed(src, j) {
                    values[t * k + j] = dataset.value(src, j);
                    mask[t * k + j] = 1.0;
                }
            }
        }
        // padded steps repeat the last timestamp so their gap is zero
        for t in len..window_length {
            timestamps[t] = timestamps[len - 1];
        }
        let delta = deltas_from_parts(&timestamps, &mask, k);
        out.push(Window {
            start,
            n_steps: window_length,
            len,
            n_features: k,
            values,
            mask,
            timestamps,
            delta,
            valid,
        });
        start += len;
    }
    out
}

/// Window indices grouped into batches, in a seeded shuffled order.
pub fn shuffled_batches(
    n_windows: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_windows).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Seeded stream of batches of padded windows.
pub fn batch_iter(
    dataset: &TimeSeriesDataset,
    window_length: usize,
    batch_size: usize,
    seed: u64,
) -> impl Iterator<Item = Vec<Window>> {
    let windows = make_windows(dataset, window_length);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batches = shuffled_batches(windows.len(), batch_size, &mut rng);
    batches
        .into_iter()
        .map(move |idx| idx.iter().map(|&i| windows[i].clone()).collect())
}
