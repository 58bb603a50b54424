use super::params::LstmParams;
use crate::linalg::sigmoid;

/// Recurrent state `(h, c)`; zero at the start of every sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        RecurrentState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations of one cell step kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub input: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`, each of length `K_h`.
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM step. Returns the new state and the cache for backprop.
pub fn recurrent_step(
    input: &[f64],
    state: &RecurrentState,
    params: &LstmParams,
) -> (RecurrentState, LstmCache) {
    let hd = state.h.len();
    let mut gates = params.w_ih.affine(input, &params.bias);
    for (r, g) in gates.iter_mut().enumerate() {
        *g += crate::linalg::dot(params.w_hh.row(r), &state.h);
    }
    for (r, g) in gates.iter_mut().enumerate() {
        *g = if (2 * hd..3 * hd).contains(&r) {
            g.tanh()
        } else {
            sigmoid(*g)
        };
    }
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (
            gates[j],
            gates[hd + j],
            gates[2 * hd + j],
            gates[3 * hd + j],
        );
        c[j] = f * state.c[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
    let cache = LstmCache {
        input: input.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gates,
        tanh_c,
    };
    (RecurrentState { h, c }, cache)
}

/// Gradients flowing out of one cell step.
pub struct LstmBackward {
    pub d_input: Vec<f64>,
    pub d_h_prev: Vec<f64>,
    pub d_c_prev: Vec<f64>,
}

/// Backprop through one step, accumulating parameter gradients into `grads`.
pub fn recurrent_step_backward(
    cache: &LstmCache,
    d_h: &[f64],
    d_c: &[f64],
    params: &LstmParams,
    grads: &mut LstmParams,
) -> LstmBackward {
    let hd = d_h.len();
    let g = &cache.gates;
    let mut d_pre = vec![0.0; 4 * hd];
    let mut d_c_prev = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
        let tc = cache.tanh_c[j];
        let d_o = d_h[j] * tc;
        let dc = d_c[j] + d_h[j] * o * (1.0 - tc * tc);
        let d_i = dc * gg;
        let d_g = dc * i;
        let d_f = dc * cache.c_prev[j];
        d_c_prev[j] = dc * f;
        d_pre[j] = d_i * i * (1.0 - i);
        d_pre[hd + j] = d_f * f * (1.0 - f);
        d_pre[2 * hd + j] = d_g * (1.0 - gg * gg);
        d_pre[3 * hd + j] = d_o * o * (1.0 - o);
    }
    grads.w_ih.add_outer(&d_pre, &cache.input);
    grads.w_hh.add_outer(&d_pre, &cache.h_prev);
    for (b, d) in grads.bias.iter_mut().zip(&d_pre) {
        *b += d;
    }
    let mut d_input = vec![0.0; cache.input.len()];
    params.w_ih.add_transpose_mul(&d_pre, &mut d_input);
    let mut d_h_prev = vec![0.0; hd];
    params.w_hh.add_transpose_mul(&d_pre, &mut d_h_prev);
    LstmBackward {
        d_input,
        d_h_prev,
        d_c_prev,
    }
}
