use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{softplus, softplus_inv, Matrix};

/// Head-specific combiner: `β = σ(W_β [γ; m] + b_β)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `K × 2K`; the first `K` columns read the decay vector, the rest the mask.
    pub w_beta: Matrix,
    pub b_beta: Vec<f64>,
}

/// Gate weights of an LSTM cell. Gate rows are stacked as input, forget, cell, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_ih: Matrix,
    pub w_hh: Matrix,
    pub bias: Vec<f64>,
}

/// All trainable tensors of one directional imputer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputerParams {
    pub n_features: usize,
    pub hidden: usize,
    /// History regression `x' = W_x h + b_x` (`K × K_h`).
    pub w_x: Matrix,
    pub b_x: Vec<f64>,
    /// Unconstrained decay weights; the effective weights are `softplus(w_gamma_raw)`.
    pub w_gamma_raw: Matrix,
    pub b_gamma: Vec<f64>,
    /// Feature regression; the diagonal is ignored.
    pub w_z: Matrix,
    pub b_z: Vec<f64>,
    pub heads: Vec<HeadParams>,
    pub lstm: LstmParams,
}

fn uniform_matrix<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect(),
    )
}

impl ImputerParams {
    /// Seeded initialization: weights uniform in `±1/√fan_in`, biases zero.
    /// Effective decay weights start uniform in `(0, 1/√K]`.
    pub fn init<R: Rng>(n_features: usize, hidden: usize, n_heads: usize, rng: &mut R) -> Self {
        let k = n_features;
        let h = hidden;
        let w_x = uniform_matrix(k, h, h, rng);
        let bound = 1.0 / (k as f64).sqrt();
        let w_gamma_raw = Matrix::from_vec(
            k,
            k,
            (0..k * k)
                .map(|_| softplus_inv(bound * (1.0 - rng.gen::<f64>())))
                .collect(),
        );
        let w_z = uniform_matrix(k, k, k, rng);
        let heads = (0..n_heads)
            .map(|_| HeadParams {
                w_beta: uniform_matrix(k, 2 * k, 2 * k, rng),
                b_beta: vec![0.0; k],
            })
            .collect();
        let lstm = LstmParams {
            w_ih: uniform_matrix(4 * h, k, k, rng),
            w_hh: uniform_matrix(4 * h, h, h, rng),
            bias: vec![0.0; 4 * h],
        };
        ImputerParams {
            n_features: k,
            hidden: h,
            w_x,
            b_x: vec![0.0; k],
            w_gamma_raw,
            b_gamma: vec![0.0; k],
            w_z,
            b_z: vec![0.0; k],
            heads,
            lstm,
        }
    }

    /// All-zero tensors with the same shapes.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    /// Effective nonnegative decay weights.
    pub fn w_gamma(&self) -> Matrix {
        Matrix {
            rows: self.w_gamma_raw.rows,
            cols: self.w_gamma_raw.cols,
            data: self.w_gamma_raw.data.iter().map(|&r| softplus(r)).collect(),
        }
    }

    /// Sets the effective decay weights (each entry must be positive).
    pub fn set_w_gamma(&mut self, effective: &Matrix) {
        assert_eq!(effective.data.len(), self.w_gamma_raw.data.len());
        for (raw, &w) in self.w_gamma_raw.data.iter_mut().zip(&effective.data) {
            assert!(w > 0.0, "effective decay weights must be positive");
            *raw = softplus_inv(w);
        }
    }

    /// Feature-regression weights with the diagonal zeroed.
    pub fn w_z_masked(&self) -> Matrix {
        let mut w = self.w_z.clone();
        for k in 0..self.n_features {
            w.set(k, k, 0.0);
        }
        w
    }

    /// Named tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("w_x".into(), &self.w_x.data),
            ("b_x".into(), &self.b_x),
            ("w_gamma_raw".into(), &self.w_gamma_raw.data),
            ("b_gamma".into(), &self.b_gamma),
            ("w_z".into(), &self.w_z.data),
            ("b_z".into(), &self.b_z),
        ];
        for (i, head) in self.heads.iter().enumerate() {
            out.push((format!("head{i}.w_beta"), &head.w_beta.data));
            out.push((format!("head{i}.b_beta"), &head.b_beta));
        }
        out.push(("lstm.w_ih".into(), &self.lstm.w_ih.data));
        out.push(("lstm.w_hh".into(), &self.lstm.w_hh.data));
        out.push(("lstm.bias".into(), &self.lstm.bias));
        out
    }

    /// Mutable tensors, in the same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.w_x.data,
            &mut self.b_x,
            &mut self.w_gamma_raw.data,
            &mut self.b_gamma,
            &mut self.w_z.data,
            &mut self.b_z,
        ];
        for head in &mut self.heads {
            out.push(&mut head.w_beta.data);
            out.push(&mut head.b_beta);
        }
        out.push(&mut self.lstm.w_ih.data);
        out.push(&mut self.lstm.w_hh.data);
        out.push(&mut self.lstm.bias);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_init_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ImputerParams::init(3, 4, 2, &mut rng);
        assert_eq!((p.w_x.rows, p.w_x.cols), (3, 4));
        assert_eq!((p.heads[1].w_beta.rows, p.heads[1].w_beta.cols), (3, 6));
        assert_eq!((p.lstm.w_ih.rows, p.lstm.w_hh.cols), (16, 4));
        assert!(p.w_x.data.iter().all(|v| v.abs() <= 0.5));
        assert!(p.b_gamma.iter().all(|&b| b == 0.0));
        let wg = p.w_gamma();
        assert!(wg
            .data
            .iter()
            .all(|&w| w > 0.0 && w <= 1.0 / 3f64.sqrt() + 1e-12));
        assert_eq!(
            p.n_params(),
            12 + 3 + 9 + 3 + 9 + 3 + 2 * (18 + 3) + 48 + 64 + 16
        );
    }

    #[test]
    fn zeros_like_keeps_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ImputerParams::init(2, 3, 1, &mut rng);
        let z = p.zeros_like();
        assert_eq!(z.n_params(), p.n_params());
        assert!(z.tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0)));
    }
}
