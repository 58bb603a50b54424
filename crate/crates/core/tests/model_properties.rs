use proptest::prelude::*;
use qsimpute::data::Window;
use qsimpute::linalg::Matrix;
use qsimpute::model::{
    bidirectional_impute, directional_pass, feature_regress, recurrent_step, temporal_decay,
    Directions, EnsembleMode, ImputerModel, ImputerParams, LstmParams, ModelSpec, RecurrentState,
};
use qsimpute::quantile::QuantileLevels;
use qsimpute::training::{total_loss, LossWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_window(rng: &mut ChaCha8Rng, t: usize, k: usize, p_obs: f64) -> Window {
    let mask: Vec<f64> = (0..t * k)
        .map(|_| f64::from(u8::from(rng.gen_bool(p_obs))))
        .collect();
    let values = mask.iter().map(|m| m * rng.gen_range(-2.0..2.0)).collect();
    let mut ts = vec![0.0];
    for _ in 1..t {
        let last = *ts.last().unwrap();
        ts.push(last + rng.gen_range(0.5..3.0));
    }
    Window::from_parts(values, mask, ts)
}

fn levels3() -> QuantileLevels {
    QuantileLevels::new(vec![0.1, 0.5, 0.9]).unwrap()
}

fn params(k: usize, h: usize, n: usize, seed: u64) -> ImputerParams {
    ImputerParams::init(k, h, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn model(k: usize, mode: EnsembleMode, directions: Directions, seed: u64) -> ImputerModel {
    ImputerModel::init(
        ModelSpec {
            n_features: k,
            hidden: 6,
            levels: levels3(),
            mode,
            use_decay: true,
            directions,
        },
        seed,
    )
}

#[test]
fn fully_observed_window_passes_through_zero_params() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = random_window(&mut rng, 7, 3, 1.0);
    let zero = params(3, 4, 3, 0).zeros_like();
    let pass = directional_pass(&w, &zero, &levels3(), true).unwrap();
    for (t, step) in pass.steps.iter().enumerate() {
        for head in &step.v_heads {
            assert_eq!(head.as_slice(), w.x(t));
        }
    }
}

#[test]
fn single_step_window() {
    let w = Window::from_parts(vec![1.0, 0.0], vec![1.0, 0.0], vec![5.0]);
    let mut p = params(2, 4, 3, 3);
    p.b_gamma = vec![-0.3, 0.2];
    let pass = directional_pass(&w, &p, &levels3(), true).unwrap();
    assert_eq!(pass.steps.len(), 1);
    assert_eq!(w.d(0), &[0.0, 0.0]);
    let g = &pass.steps[0].gamma;
    assert!((g[0] - (-0.3f64).exp()).abs() < 1e-15);
    assert!((g[1] - 0.2f64.exp()).abs() < 1e-15);
}

#[test]
fn loss_components_resum_from_step_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..20 {
        let w = random_window(&mut rng, 9, 3, 0.6);
        let p = params(3, 5, 3, seed);
        let pass = directional_pass(&w, &p, &levels3(), true).unwrap();
        if pass.n_observed == 0 {
            continue;
        }
        let n = pass.n_observed as f64;
        let sums = pass
            .step_terms
            .iter()
            .fold([0.0; 3], |a, s| [a[0] + s[0], a[1] + s[1], a[2] + s[2]]);
        let resum = sums[0] / n + sums[1] / n + sums[2] / (3.0 * n);
        assert!((resum - pass.loss.total()).abs() < 1e-10);
    }
}

#[test]
fn nan_input_names_step_and_stage() {
    let w = Window::from_parts(vec![1.0, f64::NAN], vec![1.0, 1.0], vec![0.0, 1.0]);
    let err = directional_pass(&w, &params(1, 3, 3, 0), &levels3(), true).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("step 1"), "{msg}");
}

#[test]
fn palindrome_backward_replays_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (t, k) = (9, 3);
    let half = random_window(&mut rng, 5, k, 0.6);
    let mut values = vec![0.0; t * k];
    let mut mask = vec![0.0; t * k];
    for s in 0..t {
        let src = s.min(t - 1 - s);
        for j in 0..k {
            values[s * k + j] = half.values[src * k + j];
            mask[s * k + j] = half.mask[src * k + j];
        }
    }
    let w = Window::from_parts(values, mask, (0..t).map(|s| s as f64 * 2.0).collect());
    let rev = w.reversed();
    assert_eq!(rev.values, w.values);
    assert_eq!(rev.delta, w.delta);

    let p = params(k, 6, 3, 21);
    let fwd = directional_pass(&w, &p, &levels3(), true).unwrap();
    let bwd = directional_pass(&rev, &p, &levels3(), true).unwrap();
    for (a, b) in fwd.steps.iter().zip(&bwd.steps) {
        for (ha, hb) in a.v_heads.iter().zip(&b.v_heads) {
            for (x, y) in ha.iter().zip(hb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
    let out = bidirectional_impute(&w, &p, &p, &levels3(), true).unwrap();
    for head in &out.heads {
        for s in 0..t {
            for j in 0..k {
                assert!((head[s * k + j] - head[(t - 1 - s) * k + j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn identical_directions_on_constant_window_have_zero_consistency() {
    let (t, k) = (6, 2);
    let w = Window::from_parts(
        vec![0.7; t * k],
        vec![1.0; t * k],
        (0..t).map(|s| s as f64).collect(),
    );
    let p = params(k, 4, 3, 2);
    let out = bidirectional_impute(&w, &p, &p, &levels3(), true).unwrap();
    assert!(out.consistency.abs() < 1e-6);
}

#[test]
fn fully_observed_bidirectional_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let w = random_window(&mut rng, 12, 4, 1.0);
    for mode in [EnsembleMode::SharedTrunk, EnsembleMode::FullEnsemble] {
        let m = model(4, mode, Directions::Both, 5);
        let out = m.impute_window(&w).unwrap();
        for head in &out.heads {
            assert_eq!(head.as_slice(), &w.values[..]);
        }
    }
}

#[test]
fn single_direction_matches_its_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let w = random_window(&mut rng, 8, 3, 0.5);
    let m = model(3, EnsembleMode::SharedTrunk, Directions::ForwardOnly, 6);
    let out = m.impute_window(&w).unwrap();
    let pass = directional_pass(&w, &m.members[0].forward, &m.spec.levels, true).unwrap();
    for (i, head) in out.heads.iter().enumerate() {
        for t in 0..8 {
            assert_eq!(&head[t * 3..t * 3 + 3], pass.steps[t].v_heads[i].as_slice());
        }
    }
    assert_eq!(out.consistency, 0.0);

    let m = model(3, EnsembleMode::SharedTrunk, Directions::BackwardOnly, 6);
    let out = m.impute_window(&w).unwrap();
    let pass =
        directional_pass(&w.reversed(), &m.members[0].backward, &m.spec.levels, true).unwrap();
    for (i, head) in out.heads.iter().enumerate() {
        for t in 0..8 {
            assert_eq!(
                &head[t * 3..t * 3 + 3],
                pass.steps[7 - t].v_heads[i].as_slice()
            );
        }
    }
}

#[test]
fn empty_mask_gives_zero_loss_with_flag() {
    let w = Window::from_parts(
        vec![0.0; 12],
        vec![0.0; 12],
        (0..4).map(f64::from).collect(),
    );
    let m = model(3, EnsembleMode::SharedTrunk, Directions::Both, 1);
    let loss = total_loss(&w, &m, &LossWeights::default()).unwrap();
    assert!(loss.empty_support);
    assert_eq!(
        (loss.l1, loss.l2, loss.quantile, loss.nll),
        (0.0, 0.0, 0.0, 0.0)
    );
}

#[test]
fn lstm_zero_fixed_point() {
    let p = LstmParams {
        w_ih: Matrix::zeros(16, 3),
        w_hh: Matrix::zeros(16, 4),
        bias: vec![0.0; 16],
    };
    let (s, _) = recurrent_step(&[0.0; 3], &RecurrentState::zeros(4), &p);
    assert_eq!(s.h, vec![0.0; 4]);
    assert_eq!(s.c, vec![0.0; 4]);
}

#[test]
fn lstm_hidden_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10_000 {
        let scale = rng.gen_range(0.1..20.0);
        let mut p = params(3, 4, 1, rng.gen()).lstm;
        for v in p
            .w_ih
            .data
            .iter_mut()
            .chain(p.w_hh.data.iter_mut())
            .chain(p.bias.iter_mut())
        {
            *v *= scale;
        }
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let st = RecurrentState {
            h: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            c: (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect(),
        };
        let (s, _) = recurrent_step(&x, &st, &p);
        assert!(s.h.iter().all(|h| h.abs() <= 1.0 && h.is_finite()));
    }
}

#[test]
fn lstm_three_step_unroll_matches_finite_differences() {
    use qsimpute::model::recurrent_step_backward;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = params(3, 4, 1, 9).lstm;
    let xs: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let readout: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let objective = |p: &LstmParams| {
        let mut s = RecurrentState::zeros(4);
        for x in &xs {
            s = recurrent_step(x, &s, p).0;
        }
        s.h.iter().zip(&readout).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut s = RecurrentState::zeros(4);
    let mut caches = Vec::new();
    for x in &xs {
        let (n, c) = recurrent_step(x, &s, &p);
        caches.push(c);
        s = n;
    }
    let mut grads = LstmParams {
        w_ih: Matrix::zeros(16, 3),
        w_hh: Matrix::zeros(16, 4),
        bias: vec![0.0; 16],
    };
    let mut d_h = readout.clone();
    let mut d_c = vec![0.0; 4];
    for c in caches.iter().rev() {
        let b = recurrent_step_backward(c, &d_h, &d_c, &p, &mut grads);
        d_h = b.d_h_prev;
        d_c = b.d_c_prev;
    }
    let eps = 1e-5;
    let analytic: Vec<f64> = grads
        .w_ih
        .data
        .iter()
        .chain(&grads.w_hh.data)
        .chain(&grads.bias)
        .copied()
        .collect();
    let n_ih = p.w_ih.data.len();
    let n_hh = p.w_hh.data.len();
    for (idx, &a) in analytic.iter().enumerate() {
        let bump = |delta: f64| {
            let mut q = p.clone();
            if idx < n_ih {
                q.w_ih.data[idx] += delta;
            } else if idx < n_ih + n_hh {
                q.w_hh.data[idx - n_ih] += delta;
            } else {
                q.bias[idx - n_ih - n_hh] += delta;
            }
            objective(&q)
        };
        let numeric = (bump(eps) - bump(-eps)) / (2.0 * eps);
        if a.abs() < 1e-8 && numeric.abs() < 1e-8 {
            continue;
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
        assert!(rel < 1e-4, "param {idx}: analytic {a}, numeric {numeric}");
    }
}

proptest! {
    #[test]
    fn step_outputs_respect_ranges(seed in 0u64..10_000, p_obs in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_window(&mut rng, 6, 3, p_obs);
        let p = params(3, 5, 3, seed);
        let pass = directional_pass(&w, &p, &levels3(), true).unwrap();
        for (t, s) in pass.steps.iter().enumerate() {
            prop_assert!(s.gamma.iter().all(|g| *g > 0.0));
            for b in &s.beta {
                prop_assert!(b.iter().all(|b| *b > 0.0 && *b < 1.0));
            }
            for head in &s.v_heads {
                for ((v, x), m) in head.iter().zip(w.x(t)).zip(w.m(t)) {
                    if *m > 0.5 {
                        prop_assert_eq!(v.to_bits(), x.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn decay_nonincreasing_in_delta(seed in 0u64..10_000, j in 0usize..3, extra in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = params(3, 4, 1, seed);
        let w_gamma = p.w_gamma();
        let d: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..5.0)).collect();
        let mut d2 = d.clone();
        d2[j] += extra;
        let zero = vec![0.0; 3];
        let g1 = temporal_decay(&d, &w_gamma, &zero);
        let g2 = temporal_decay(&d2, &w_gamma, &zero);
        for (a, b) in g1.iter().zip(&g2) {
            prop_assert!(*b <= *a);
            prop_assert!(*a > 0.0 && *a <= 1.0);
        }
    }

    #[test]
    fn feature_regression_ignores_own_input(seed in 0u64..10_000, j in 0usize..4, bump in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = params(4, 4, 1, seed);
        for i in 0..4 {
            p.w_z.set(i, i, rng.gen_range(-3.0..3.0));
        }
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut y = x.clone();
        y[j] += bump;
        let wz = p.w_z_masked();
        let a = feature_regress(&x, &wz, &p.b_z);
        let b = feature_regress(&y, &wz, &p.b_z);
        prop_assert_eq!(a[j].to_bits(), b[j].to_bits());
    }
}
