//! Recurrent imputer: the per-step procedure, one direction over a window,
//! and the bidirectional ensemble wrapper.

mod bidirectional;
mod direction;
mod lstm;
mod params;
mod step;

pub use bidirectional::{
    bidirectional_impute, combine_member, BidirectionalOutput, Directions, EnsembleMode,
    ImputerModel, Member, MemberPasses, ModelSpec,
};
pub(crate) use direction::abs_grad;
pub use direction::{
    directional_backward, directional_pass, own_loss_seeds, DirectionLoss, DirectionalPass,
    StepOutput, StepSeeds,
};
pub use lstm::{recurrent_step, recurrent_step_backward, LstmCache, RecurrentState};
pub use params::{HeadParams, ImputerParams, LstmParams};
pub use step::{
    complement, feature_regress, head_combine, history_regress, replace, temporal_decay,
};
