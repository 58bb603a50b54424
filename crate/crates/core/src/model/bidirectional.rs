use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::direction::{directional_pass, DirectionalPass};
use super::params::ImputerParams;
use crate::data::Window;
use crate::error::{ImputeError, Result};
use crate::quantile::QuantileLevels;

/// Whether heads share one trunk or every member owns a complete imputer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    #[default]
    SharedTrunk,
    FullEnsemble,
}

impl EnsembleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleMode::SharedTrunk => "shared_trunk",
            EnsembleMode::FullEnsemble => "full_ensemble",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    #[default]
    Both,
    ForwardOnly,
    BackwardOnly,
}

impl Directions {
    pub fn forward(self) -> bool {
        self != Directions::BackwardOnly
    }

    pub fn backward(self) -> bool {
        self != Directions::ForwardOnly
    }
}

/// Architecture of an imputer model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_features: usize,
    pub hidden: usize,
    pub levels: QuantileLevels,
    pub mode: EnsembleMode,
    pub use_decay: bool,
    pub directions: Directions,
}

/// One ensemble member: a forward and a backward directional imputer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub forward: ImputerParams,
    pub backward: ImputerParams,
    pub levels: QuantileLevels,
}

/// The full model. In shared-trunk mode there is a single member with `N`
/// heads; in full-ensemble mode there are `N` members with one head each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputerModel {
    pub spec: ModelSpec,
    pub members: Vec<Member>,
}

impl ImputerModel {
    pub fn init(spec: ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let member_levels: Vec<QuantileLevels> = match spec.mode {
            EnsembleMode::SharedTrunk => vec![spec.levels.clone()],
            EnsembleMode::FullEnsemble => (0..spec.levels.len())
                .map(|i| spec.levels.single(i))
                .collect(),
        };
        let members = member_levels
            .into_iter()
            .map(|levels| {
                let n = levels.len();
                Member {
                    forward: ImputerParams::init(spec.n_features, spec.hidden, n, &mut rng),
                    backward: ImputerParams::init(spec.n_features, spec.hidden, n, &mut rng),
                    levels,
                }
            })
            .collect();
        ImputerModel { spec, members }
    }

    pub fn n_heads(&self) -> usize {
        self.spec.levels.len()
    }

    pub fn zeros_like(&self) -> Self {
        ImputerModel {
            spec: self.spec.clone(),
            members: self
                .members
                .iter()
                .map(|m| Member {
                    forward: m.forward.zeros_like(),
                    backward: m.backward.zeros_like(),
                    levels: m.levels.clone(),
                })
                .collect(),
        }
    }

    /// Named tensors in checkpoint order: members in order, forward before backward.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (j, m) in self.members.iter().enumerate() {
            for (dir, p) in [("fwd", &m.forward), ("bwd", &m.backward)] {
                for (name, t) in p.tensors() {
                    out.push((format!("member{j}.{dir}.{name}"), t));
                }
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for m in &mut self.members {
            out.extend(m.forward.tensors_mut());
            out.extend(m.backward.tensors_mut());
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, values.len(), "flat parameter length");
    }

    /// Runs every member over one window.
    pub fn run_window(&self, window: &Window) -> Result<Vec<MemberPasses>> {
        let dirs = self.spec.directions;
        let reversed = dirs.backward().then(|| window.reversed());
        self.members
            .iter()
            .map(|m| {
                let forward = if dirs.forward() {
                    Some(directional_pass(
                        window,
                        &m.forward,
                        &m.levels,
                        self.spec.use_decay,
                    )?)
                } else {
                    None
                };
                let backward = match &reversed {
                    Some(rw) => Some(directional_pass(
                        rw,
                        &m.backward,
                        &m.levels,
                        self.spec.use_decay,
                    )?),
                    None => None,
                };
                Ok(MemberPasses { forward, backward })
            })
            .collect()
    }

    /// Combined per-head outputs over one window.
    pub fn impute_window(&self, window: &Window) -> Result<BidirectionalOutput> {
        let passes = self.run_window(window)?;
        let mut out = BidirectionalOutput::empty(window.len, window.n_features);
        for p in &passes {
            out.extend(combine_member(p, window.len, window.n_features)?);
        }
        Ok(out)
    }
}

/// Directional passes of one member. The backward pass runs on the reversed window.
#[derive(Clone, Debug)]
pub struct MemberPasses {
    pub forward: Option<DirectionalPass>,
    pub backward: Option<DirectionalPass>,
}

/// Per-head imputations combined across directions, laid out `t * K + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BidirectionalOutput {
    pub len: usize,
    pub n_features: usize,
    /// Final per-head imputations `v_{t,i}` (observed cells equal the input).
    pub heads: Vec<Vec<f64>>,
    /// Per-head estimates before observed values are written back.
    pub heads_hat: Vec<Vec<f64>>,
    /// Mean over `(t, k)` of `|v̄_f − v̄_b|`, summed over members; 0 for one direction.
    pub consistency: f64,
}

impl BidirectionalOutput {
    fn empty(len: usize, n_features: usize) -> Self {
        BidirectionalOutput {
            len,
            n_features,
            heads: Vec::new(),
            heads_hat: Vec::new(),
            consistency: 0.0,
        }
    }

    fn extend(&mut self, other: BidirectionalOutput) {
        self.heads.extend(other.heads);
        self.heads_hat.extend(other.heads_hat);
        self.consistency += other.consistency;
    }

    /// Mean over heads, `len × K`.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.heads.len() as f64;
        let mut out = vec![0.0; self.len * self.n_features];
        for h in &self.heads {
            for (o, v) in out.iter_mut().zip(h) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    /// Head values at one cell.
    pub fn cell(&self, t: usize, k: usize) -> Vec<f64> {
        self.heads
            .iter()
            .map(|h| h[t * self.n_features + k])
            .collect()
    }
}

/// Averages the forward and re-reversed backward outputs of one member.
pub fn combine_member(
    passes: &MemberPasses,
    len: usize,
    n_features: usize,
) -> Result<BidirectionalOutput> {
    let k = n_features;
    let n_heads = passes
        .forward
        .as_ref()
        .or(passes.backward.as_ref())
        .map(|p| p.steps.first().map_or(0, |s| s.v_heads.len()))
        .ok_or_else(|| ImputeError::InvalidArgument("no direction enabled".into()))?;
    let mut heads = vec![vec![0.0; len * k]; n_heads];
    let mut heads_hat = vec![vec![0.0; len * k]; n_heads];
    let mut consistency = 0.0;
    for t in 0..len {
        let f = passes.forward.as_ref().map(|p| &p.steps[t]);
        let b = passes.backward.as_ref().map(|p| &p.steps[len - 1 - t]);
        for i in 0..n_heads {
            for j in 0..k {
                let (v, vh) = match (f, b) {
                    (Some(f), Some(b)) => (
                        0.5 * (f.v_heads[i][j] + b.v_heads[i][j]),
                        0.5 * (f.v_hat[i][j] + b.v_hat[i][j]),
                    ),
                    (Some(s), None) | (None, Some(s)) => (s.v_heads[i][j], s.v_hat[i][j]),
                    (None, None) => unreachable!(),
                };
                heads[i][t * k + j] = v;
                heads_hat[i][t * k + j] = vh;
            }
        }
        if let (Some(f), Some(b)) = (f, b) {
            consistency += f
                .v_mean
                .iter()
                .zip(&b.v_mean)
                .map(|(a, c)| (a - c).abs())
                .sum::<f64>();
        }
    }
    if len > 0 {
        consistency /= (len * k) as f64;
    }
    Ok(BidirectionalOutput {
        len,
        n_features,
        heads,
        heads_hat,
        consistency,
    })
}

/// Runs one forward/backward imputer pair over a window and combines the directions.
pub fn bidirectional_impute(
    window: &Window,
    params_fwd: &ImputerParams,
    params_bwd: &ImputerParams,
    levels: &QuantileLevels,
    use_decay: bool,
) -> Result<BidirectionalOutput> {
    if params_fwd.n_features != params_bwd.n_features
        || params_fwd.hidden != params_bwd.hidden
        || params_fwd.n_heads() != params_bwd.n_heads()
    {
        return Err(ImputeError::Shape(
            "forward and backward imputers differ in shape".into(),
        ));
    }
    let passes = MemberPasses {
        forward: Some(directional_pass(window, params_fwd, levels, use_decay)?),
        backward: Some(directional_pass(
            &window.reversed(),
            params_bwd,
            levels,
            use_decay,
        )?),
    };
    combine_member(&passes, window.len, window.n_features)
}
