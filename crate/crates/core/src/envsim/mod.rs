//! Point-mass hover environment and the gravity schedules that drive it.

mod point_mass;
mod schedule;

pub use point_mass::{
    Observation, PointMassEnv, PointMassParams, StepOutcome, ACTION_DIM, EVAL_GRAVITIES, OBS_DIM,
};
pub use schedule::{
    FixedGravity, GravitySchedule, LinearGravity, RandomGravity, ScheduleFactory, ScheduleRegistry,
    ScheduleSpec, SineGravity, G_FIXED, G_STRONG, G_WEAK, SINE_AMPLITUDE, SINE_MIDPOINT,
};

/// Evaluation environment pinned to `gravity`.
pub fn make_eval_env(gravity: f64) -> crate::Result<PointMassEnv> {
    PointMassEnv::with_pinned_gravity(gravity)
}
