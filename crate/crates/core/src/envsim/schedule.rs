use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;

use crate::rngs;
use crate::{Error, Result};

pub const G_FIXED: f64 = -9.81;
/// Weakest gravity of the training range.
pub const G_WEAK: f64 = -7.0;
/// Strongest gravity of the training range.
pub const G_STRONG: f64 = -17.0;
pub const SINE_MIDPOINT: f64 = -12.0;
pub const SINE_AMPLITUDE: f64 = 5.0;

/// Gravity as a function of the global environment step.
pub trait GravitySchedule: Send + Sync {
    fn kind(&self) -> &'static str;

    fn total_steps(&self) -> u64;

    /// Gravity at `step`; the caller guarantees `step <= total_steps`.
    fn gravity_at(&self, step: u64) -> f64;

    fn gravity(&self, step: u64) -> Result<f64> {
        if step > self.total_steps() {
            return Err(Error::OutOfRange {
                what: "global step",
                detail: format!("{step} > total_steps {}", self.total_steps()),
            });
        }
        Ok(self.gravity_at(step))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub total_steps: u64,
    /// Gravity only changes at multiples of this many steps.
    pub adjustment_period: u64,
    /// Number of sine periods over the run.
    pub cycles: u32,
    pub seed: u64,
}

impl ScheduleSpec {
    fn quantize(&self, step: u64) -> u64 {
        step - step % self.adjustment_period
    }
}

#[derive(Debug, Clone)]
pub struct FixedGravity {
    total_steps: u64,
}

impl GravitySchedule for FixedGravity {
    fn kind(&self) -> &'static str {
        "fixed"
    }
    fn total_steps(&self) -> u64 {
        self.total_steps
    }
    fn gravity_at(&self, _step: u64) -> f64 {
        G_FIXED
    }
}

/// −7 at the start to −17 at the end, held constant within each period.
#[derive(Debug, Clone)]
pub struct LinearGravity {
    spec: ScheduleSpec,
}

impl GravitySchedule for LinearGravity {
    fn kind(&self) -> &'static str {
        "linear"
    }
    fn total_steps(&self) -> u64 {
        self.spec.total_steps
    }
    fn gravity_at(&self, step: u64) -> f64 {
        let total = self.spec.total_steps;
        if total == 0 {
            return G_WEAK;
        }
        if step >= total {
            return G_STRONG;
        }
        let q = self.spec.quantize(step) as f64;
        G_WEAK + (G_STRONG - G_WEAK) * q / total as f64
    }
}

/// `−12 + 5·sin(2π·cycles·q/total)`: starts at the midpoint heading toward −7.
#[derive(Debug, Clone)]
pub struct SineGravity {
    spec: ScheduleSpec,
}

impl GravitySchedule for SineGravity {
    fn kind(&self) -> &'static str {
        "sine"
    }
    fn total_steps(&self) -> u64 {
        self.spec.total_steps
    }
    fn gravity_at(&self, step: u64) -> f64 {
        let total = self.spec.total_steps;
        if total == 0 {
            return SINE_MIDPOINT;
        }
        let q = self.spec.quantize(step) as f64;
        let phase = 2.0 * PI * self.spec.cycles as f64 * q / total as f64;
        (SINE_MIDPOINT + SINE_AMPLITUDE * phase.sin()).clamp(G_STRONG, G_WEAK)
    }
}

/// A fresh uniform draw from [−17, −7] every adjustment period.
#[derive(Debug, Clone)]
pub struct RandomGravity {
    spec: ScheduleSpec,
    draws: Vec<f64>,
}

impl RandomGravity {
    fn new(spec: ScheduleSpec) -> Self {
        let mut rng = rngs::stream(spec.seed, rngs::STREAM_SCHEDULE);
        let periods = spec.total_steps / spec.adjustment_period + 1;
        let draws = (0..periods)
            .map(|_| rng.random_range(G_STRONG..=G_WEAK))
            .collect();
        Self { spec, draws }
    }
}

impl GravitySchedule for RandomGravity {
    fn kind(&self) -> &'static str {
        "random"
    }
    fn total_steps(&self) -> u64 {
        self.spec.total_steps
    }
    fn gravity_at(&self, step: u64) -> f64 {
        self.draws[(step / self.spec.adjustment_period) as usize]
    }
}

pub type ScheduleFactory = fn(&ScheduleSpec) -> Box<dyn GravitySchedule>;

/// Name → factory table for gravity schedules.
#[derive(Clone, Default)]
pub struct ScheduleRegistry {
    factories: BTreeMap<String, ScheduleFactory>,
}

impl ScheduleRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self::default();
        r.register("fixed", |s| {
            Box::new(FixedGravity {
                total_steps: s.total_steps,
            })
        });
        r.register("linear", |s| Box::new(LinearGravity { spec: *s }));
        r.register("sine", |s| Box::new(SineGravity { spec: *s }));
        r.register("random", |s| Box::new(RandomGravity::new(*s)));
        r
    }

    pub fn register(&mut self, name: &str, factory: ScheduleFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn create(&self, name: &str, spec: &ScheduleSpec) -> Result<Box<dyn GravitySchedule>> {
        if spec.adjustment_period == 0 {
            return Err(Error::Config("adjustment period must be positive".into()));
        }
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "schedule",
                name: name.to_string(),
                known: self.names().join(", "),
            })?;
        Ok(factory(spec))
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make(name: &str, total: u64) -> Box<dyn GravitySchedule> {
        let spec = ScheduleSpec {
            total_steps: total,
            adjustment_period: 1000,
            cycles: 3,
            seed: 17,
        };
        ScheduleRegistry::with_builtins()
            .create(name, &spec)
            .unwrap()
    }

    #[test]
    fn fixed_is_constant() {
        let s = make("fixed", 50_000);
        for step in [0, 999, 1000, 25_000, 50_000] {
            assert_eq!(s.gravity(step).unwrap(), G_FIXED);
        }
        assert!(s.gravity(50_001).is_err());
    }

    #[test]
    fn linear_endpoints_and_monotonicity() {
        let s = make("linear", 200_000);
        assert_eq!(s.gravity(0).unwrap(), -7.0);
        assert_eq!(s.gravity(200_000).unwrap(), -17.0);
        let mut last = f64::INFINITY;
        for step in (0..=200_000).step_by(250) {
            let g = s.gravity(step).unwrap();
            assert!(g <= last);
            last = g;
        }
    }

    #[test]
    fn sine_returns_to_midpoint_each_cycle() {
        let s = make("sine", 300_000);
        for step in [0, 100_000, 200_000, 300_000] {
            assert!(
                (s.gravity(step).unwrap() + 12.0).abs() < 1e-9,
                "step {step}"
            );
        }
        // rises toward −7 first
        assert!(s.gravity(25_000).unwrap() > -7.1);
    }

    #[test]
    fn all_schedules_are_piecewise_constant_and_in_range() {
        for name in ["fixed", "linear", "sine", "random"] {
            let s = make(name, 201_000);
            for step in 0..=201_000u64 {
                let g = s.gravity(step).unwrap();
                if name == "fixed" {
                    assert_eq!(g, G_FIXED);
                } else {
                    assert!((G_STRONG..=G_WEAK).contains(&g), "{name} {step}: {g}");
                }
                if step % 1000 != 0 && step < 201_000 {
                    assert_eq!(
                        g,
                        s.gravity(step - 1).unwrap(),
                        "{name} changed mid-period at {step}"
                    );
                }
            }
        }
    }

    #[test]
    fn random_is_seeded() {
        let a = make("random", 20_000);
        let b = make("random", 20_000);
        let ga: Vec<f64> = (0..20).map(|p| a.gravity(p * 1000).unwrap()).collect();
        let gb: Vec<f64> = (0..20).map(|p| b.gravity(p * 1000).unwrap()).collect();
        assert_eq!(ga, gb);
        assert!(ga.windows(2).any(|w| w[0] != w[1]));
    }
}
