use rand::Rng;

use super::schedule::{GravitySchedule, G_STRONG, G_WEAK};
use crate::{Error, Result};

/// Observation `[height, velocity, gravity]`.
pub type Observation = [f64; 3];

pub const OBS_DIM: usize = 3;
pub const ACTION_DIM: usize = 1;

/// Gravities probed at every evaluation.
pub const EVAL_GRAVITIES: [f64; 5] = [-7.0, -9.5, -12.0, -14.5, -17.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMassParams {
    pub mass: f64,
    pub max_force: f64,
    pub dt: f64,
    pub target_height: f64,
    pub episode_len: u32,
}

impl Default for PointMassParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            max_force: 25.0,
            dt: 0.05,
            target_height: 1.0,
            episode_len: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// One-dimensional hover task: a unit mass under gravity with a bounded
/// vertical thruster, rewarded for staying at the target height.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassEnv {
    pub y: f64,
    pub v: f64,
    pub g: f64,
    pub step_in_episode: u32,
    pub params: PointMassParams,
    pinned_gravity: Option<f64>,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        Self::new(PointMassParams::default())
    }
}

impl PointMassEnv {
    pub fn new(params: PointMassParams) -> Self {
        Self {
            y: 0.0,
            v: 0.0,
            g: super::schedule::G_FIXED,
            step_in_episode: 0,
            params,
            pinned_gravity: None,
        }
    }

    /// Environment whose gravity stays at `gravity` for every episode.
    pub fn with_pinned_gravity(gravity: f64) -> Result<Self> {
        if !(G_STRONG..=G_WEAK).contains(&gravity) {
            return Err(Error::OutOfRange {
                what: "evaluation gravity",
                detail: format!("{gravity} not in [{G_STRONG}, {G_WEAK}]"),
            });
        }
        Ok(Self {
            g: gravity,
            pinned_gravity: Some(gravity),
            ..Self::default()
        })
    }

    pub fn pinned_gravity(&self) -> Option<f64> {
        self.pinned_gravity
    }

    pub fn observation(&self) -> Observation {
        [self.y, self.v, self.g]
    }

    /// Starts an episode at a random height in [0, 0.2] with the schedule's
    /// gravity for `global_step` (or the pinned gravity).
    pub fn reset<R: Rng + ?Sized>(
        &mut self,
        schedule: &dyn GravitySchedule,
        global_step: u64,
        rng: &mut R,
    ) -> Result<Observation> {
        let g = match self.pinned_gravity {
            Some(g) => g,
            None => schedule.gravity(global_step)?,
        };
        Ok(self.reset_with_gravity(g, rng))
    }

    pub fn reset_with_gravity<R: Rng + ?Sized>(
        &mut self,
        gravity: f64,
        rng: &mut R,
    ) -> Observation {
        self.y = rng.random_range(0.0..=0.2);
        self.v = 0.0;
        self.g = self.pinned_gravity.unwrap_or(gravity);
        self.step_in_episode = 0;
        self.observation()
    }

    /// Advances one semi-implicit Euler step with thrust `action · F_max`,
    /// `action` clipped to [−1, 1].
    pub fn step(&mut self, action: f64) -> Result<StepOutcome> {
        if !action.is_finite() {
            return Err(Error::NonFinite {
                context: "action",
                detail: format!("{action}"),
            });
        }
        let a = action.clamp(-1.0, 1.0);
        let p = &self.params;
        let accel = (a * p.max_force + p.mass * self.g) / p.mass;
        self.v += accel * p.dt;
        self.y += self.v * p.dt;
        if self.y <= 0.0 {
            self.y = 0.0;
            self.v = self.v.max(0.0);
        }
        self.step_in_episode += 1;
        let reward = -(self.y - p.target_height).abs() - 0.01 * a * a;
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.step_in_episode >= p.episode_len,
        })
    }

    /// Thrust fraction that exactly cancels gravity.
    pub fn hover_action(&self) -> f64 {
        -self.g * self.params.mass / self.params.max_force
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{ScheduleRegistry, ScheduleSpec};
    use crate::rngs;

    fn at(y: f64, v: f64, g: f64) -> PointMassEnv {
        PointMassEnv {
            y,
            v,
            g,
            ..PointMassEnv::default()
        }
    }

    #[test]
    fn resting_on_floor_without_thrust() {
        let mut env = at(0.0, 0.0, -9.81);
        let out = env.step(0.0).unwrap();
        assert_eq!(out.observation, [0.0, 0.0, -9.81]);
        assert_eq!(out.reward, -1.0);
    }

    #[test]
    fn hover_thrust_holds_height() {
        let mut env = at(1.0, 0.0, -10.0);
        let out = env.step(0.4).unwrap();
        assert!((env.y - 1.0).abs() < 1e-15);
        assert!((out.reward + 0.0016).abs() < 1e-15);
    }

    #[test]
    fn free_fall_single_step() {
        let mut env = at(1.0, 0.0, -9.81);
        env.step(0.0).unwrap();
        assert!((env.v + 0.4905).abs() < 1e-12);
        assert!((env.y - 0.975475).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_action() {
        let mut env = PointMassEnv::default();
        assert!(env.step(f64::NAN).is_err());
        assert!(env.step(f64::INFINITY).is_err());
    }

    #[test]
    fn episode_ends_after_episode_len() {
        let mut env = PointMassEnv::default();
        let mut rng = rngs::stream(0, 0);
        env.reset_with_gravity(-9.81, &mut rng);
        for i in 1..=200 {
            let out = env.step(0.3).unwrap();
            assert_eq!(out.done, i == 200);
        }
    }

    #[test]
    fn energy_drift_is_second_order_in_dt() {
        let mut env = at(50.0, 3.0, -9.81);
        let g = env.g;
        let dt = env.params.dt;
        for _ in 0..40 {
            let before = 0.5 * env.v * env.v + g.abs() * env.y;
            env.step(0.0).unwrap();
            assert!(env.y > 0.0);
            let after = 0.5 * env.v * env.v + g.abs() * env.y;
            assert!((after - before).abs() <= g * g * dt * dt + 1e-9);
        }
    }

    #[test]
    fn reset_uses_schedule_and_is_deterministic() {
        let spec = ScheduleSpec {
            total_steps: 10_000,
            adjustment_period: 1000,
            cycles: 3,
            seed: 1,
        };
        let reg = ScheduleRegistry::with_builtins();
        let linear = reg.create("linear", &spec).unwrap();
        let mut env = PointMassEnv::default();
        let a = env
            .reset(linear.as_ref(), 5_000, &mut rngs::stream(4, 0))
            .unwrap();
        let b = env
            .reset(linear.as_ref(), 5_000, &mut rngs::stream(4, 0))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a[2], linear.gravity(5_000).unwrap());
        assert!((0.0..=0.2).contains(&a[0]) && a[1] == 0.0);
        let fixed = reg.create("fixed", &spec).unwrap();
        assert_eq!(
            env.reset(fixed.as_ref(), 123, &mut rngs::stream(0, 0))
                .unwrap()[2],
            -9.81
        );
    }

    #[test]
    fn pinned_gravity_ignores_schedule() {
        let spec = ScheduleSpec {
            total_steps: 10_000,
            adjustment_period: 1000,
            cycles: 3,
            seed: 1,
        };
        let sine = ScheduleRegistry::with_builtins()
            .create("sine", &spec)
            .unwrap();
        let mut env = PointMassEnv::with_pinned_gravity(-12.0).unwrap();
        let mut rng = rngs::stream(2, 0);
        for step in [0, 1_700, 9_000] {
            assert_eq!(env.reset(sine.as_ref(), step, &mut rng).unwrap()[2], -12.0);
            for _ in 0..10 {
                assert_eq!(env.step(0.1).unwrap().observation[2], -12.0);
            }
        }
        assert!(PointMassEnv::with_pinned_gravity(-6.0).is_err());
        assert!(PointMassEnv::with_pinned_gravity(-17.5).is_err());
    }

    #[test]
    fn hover_policy_settles_near_target() {
        for g in EVAL_GRAVITIES {
            let mut env = PointMassEnv::with_pinned_gravity(g).unwrap();
            env.reset_with_gravity(g, &mut rngs::stream(0, 0));
            // climb, then hold: a simple PD controller around the hover thrust
            let mut last_reward = f64::NEG_INFINITY;
            for _ in 0..200 {
                let a = env.hover_action() + 0.1 * (1.0 - env.y) - 0.1 * env.v;
                last_reward = env.step(a).unwrap().reward;
            }
            assert!(last_reward >= -0.01, "g={g}: {last_reward}");
        }
    }
}
