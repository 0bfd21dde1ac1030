//! Max-entropy actor-critic with twin critics, Polyak-averaged targets,
//! learned temperature, and an optional invariance penalty on the actor.

mod adam;
pub mod losses;
mod mlp;
pub mod policy;
mod sac;

pub use adam::Adam;
pub use losses::{
    entropy_coef_loss, irm_policy_loss, irm_w_gradient, policy_loss, q_loss, td_targets, LossGrad,
    PolicyLoss, Transitions,
};
pub use mlp::{Mlp, MlpForward};
pub use policy::GaussianPolicy;
pub use sac::{CheckpointMeta, SacAgent, SacConfig, StepStats, TensorLayout};
