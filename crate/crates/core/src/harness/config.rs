use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::SacConfig;
use crate::envsim::{PointMassParams, ScheduleRegistry, EVAL_GRAVITIES, G_STRONG, G_WEAK};
use crate::replay::BufferRegistry;
use crate::{Error, Result};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "MTR_OUT_DIR";

/// An agent kind pairs a replay strategy with whether the actor carries the
/// invariance penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentKind {
    pub name: &'static str,
    pub buffer: &'static str,
    pub irm: bool,
}

pub const AGENT_KINDS: [AgentKind; 5] = [
    AgentKind {
        name: "fifo",
        buffer: "fifo",
        irm: false,
    },
    AgentKind {
        name: "reservoir",
        buffer: "reservoir",
        irm: false,
    },
    AgentKind {
        name: "half",
        buffer: "half",
        irm: false,
    },
    AgentKind {
        name: "mtr",
        buffer: "mtr",
        irm: false,
    },
    AgentKind {
        name: "mtr_irm",
        buffer: "mtr",
        irm: true,
    },
];

pub fn agent_kind(name: &str) -> Result<AgentKind> {
    AGENT_KINDS
        .iter()
        .copied()
        .find(|k| k.name == name)
        .ok_or_else(|| Error::UnknownStrategy {
            kind: "buffer",
            name: name.to_string(),
            known: AGENT_KINDS
                .iter()
                .map(|k| k.name)
                .collect::<Vec<_>>()
                .join(", "),
        })
}

/// Full experiment configuration. Every key can be set from a flat TOML
/// file; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub buffer: String,
    pub schedule: String,
    pub total_steps: u64,
    pub buffer_capacity: usize,
    pub n_b: usize,
    pub beta_mtr: f64,
    pub lambda_irm: f64,
    pub batch_size: usize,
    pub train_frequency: u64,
    pub warmup: u64,
    pub eval_every_episodes: u64,
    pub episodes_per_eval: u32,
    pub eval_gravities: Vec<f64>,
    pub seeds: Vec<u64>,
    pub adjustment_period: u64,
    pub sine_cycles: u32,
    pub episode_len: u32,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub gamma: f64,
    pub tau: f64,
    pub save_checkpoints: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            buffer: "mtr".into(),
            schedule: "fixed".into(),
            total_steps: 201_000,
            buffer_capacity: 20_000,
            n_b: 20,
            beta_mtr: 0.85,
            lambda_irm: 0.1,
            batch_size: 64,
            train_frequency: 1,
            warmup: 1_000,
            eval_every_episodes: 100,
            episodes_per_eval: 1,
            eval_gravities: EVAL_GRAVITIES.to_vec(),
            seeds: vec![1, 2, 3],
            adjustment_period: 1_000,
            sine_cycles: 3,
            episode_len: 200,
            hidden_width: 32,
            hidden_layers: 2,
            learning_rate: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            gamma: 0.99,
            tau: 0.005,
            save_checkpoints: true,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Full-size settings: wider networks,
    /// bigger batches and a million-experience buffer.
    pub fn full_scale() -> Self {
        Self {
            total_steps: 12_000_000,
            buffer_capacity: 1_000_000,
            batch_size: 256,
            hidden_width: 256,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn agent_kind(&self) -> Result<AgentKind> {
        agent_kind(&self.buffer)
    }

    pub fn sac_config(&self) -> Result<SacConfig> {
        let kind = self.agent_kind()?;
        Ok(SacConfig {
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            gamma: self.gamma,
            tau: self.tau,
            target_entropy: None,
            init_log_alpha: 0.0,
            lambda_irm: if kind.irm { self.lambda_irm } else { 0.0 },
        })
    }

    pub fn env_params(&self) -> PointMassParams {
        PointMassParams {
            episode_len: self.episode_len,
            ..PointMassParams::default()
        }
    }

    /// Output directory: explicit `out_dir`, else `$MTR_OUT_DIR/<buffer>_<schedule>`,
    /// else `runs/<buffer>_<schedule>`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        if let Some(dir) = &self.out_dir {
            return dir.clone();
        }
        let root = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(format!("{}_{}", self.buffer, self.schedule))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let kind = self.agent_kind()?;
        if !BufferRegistry::with_builtins()
            .names()
            .contains(&kind.buffer)
        {
            return bad(format!("buffer strategy {} is not registered", kind.buffer));
        }
        let schedules = ScheduleRegistry::with_builtins();
        if !schedules.names().contains(&self.schedule.as_str()) {
            return Err(Error::UnknownStrategy {
                kind: "schedule",
                name: self.schedule.clone(),
                known: schedules.names().join(", "),
            });
        }
        let positive = [
            ("buffer_capacity", self.buffer_capacity as u64),
            ("n_b", self.n_b as u64),
            ("batch_size", self.batch_size as u64),
            ("train_frequency", self.train_frequency),
            ("eval_every_episodes", self.eval_every_episodes),
            ("episodes_per_eval", self.episodes_per_eval as u64),
            ("adjustment_period", self.adjustment_period),
            ("sine_cycles", self.sine_cycles as u64),
            ("episode_len", self.episode_len as u64),
            ("hidden_width", self.hidden_width as u64),
            ("hidden_layers", self.hidden_layers as u64),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if kind.buffer == "mtr" && !self.buffer_capacity.is_multiple_of(self.n_b) {
            return bad(format!(
                "buffer_capacity {} must be divisible by n_b {}",
                self.buffer_capacity, self.n_b
            ));
        }
        if kind.buffer == "half" && !self.buffer_capacity.is_multiple_of(2) {
            return bad("half-half buffer_capacity must be even".into());
        }
        if !(0.0..=1.0).contains(&self.beta_mtr) {
            return bad(format!("beta_mtr {} outside [0, 1]", self.beta_mtr));
        }
        if self.lambda_irm.is_nan() || self.lambda_irm < 0.0 {
            return bad("lambda_irm must be nonnegative".into());
        }
        let lr_ok = self.learning_rate > 0.0 && self.learning_rate.is_finite();
        if !lr_ok || !(self.tau > 0.0 && self.tau <= 1.0) || !(0.0..=1.0).contains(&self.gamma) {
            return bad("learning_rate > 0, tau in (0, 1] and gamma in [0, 1] are required".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if self.eval_gravities.is_empty() {
            return bad("eval_gravities must not be empty".into());
        }
        if let Some(g) = self
            .eval_gravities
            .iter()
            .find(|g| !(G_STRONG..=G_WEAK).contains(*g))
        {
            return bad(format!("eval gravity {g} outside [{G_STRONG}, {G_WEAK}]"));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.schedule == "sine"
            && !self
                .total_steps
                .is_multiple_of(self.sine_cycles as u64 * self.adjustment_period)
        {
            log::warn!(
                "total_steps {} is not a multiple of sine_cycles × adjustment_period; \
                 the last cycle will not end exactly on the midpoint",
                self.total_steps
            );
        }
        Ok(())
    }
}
