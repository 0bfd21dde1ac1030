use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::losses::{self, PolicyLoss, Transitions};
use super::mlp::Mlp;
use super::policy::GaussianPolicy;
use crate::replay::SampledBatch;
use crate::rngs::{self, Rng as StdRng};
use crate::{Error, Result};

/// Learning hyperparameters of the actor-critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Defaults to `−action_dim` when absent.
    pub target_entropy: Option<f64>,
    pub init_log_alpha: f64,
    /// Weight of the invariance penalty; zero gives the plain policy loss.
    pub lambda_irm: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            hidden_layers: 2,
            learning_rate: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            gamma: 0.99,
            tau: 0.005,
            target_entropy: None,
            init_log_alpha: 0.0,
            lambda_irm: 0.0,
        }
    }
}

/// Diagnostics of one gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub policy_loss: f64,
    pub irm_penalty: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub policy: GaussianPolicy,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    pub target_entropy: f64,
    opt_policy: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_alpha: Adam,
    rng: StdRng,
    updates: u64,
}

impl SacAgent {
    pub fn new(state_dim: usize, action_dim: usize, config: SacConfig, seed: u64) -> Result<Self> {
        if config.hidden_layers == 0 || config.hidden_width == 0 {
            return Err(Error::Config(
                "networks need at least one hidden unit and layer".into(),
            ));
        }
        if !(config.tau > 0.0 && config.tau <= 1.0) || !(0.0..=1.0).contains(&config.gamma) {
            return Err(Error::Config(
                "tau must be in (0, 1] and gamma in [0, 1]".into(),
            ));
        }
        if config.lambda_irm < 0.0 {
            return Err(Error::Config("lambda_irm must be nonnegative".into()));
        }
        let mut init = rngs::stream(seed, rngs::STREAM_AGENT ^ 0x100);
        let hidden = vec![config.hidden_width; config.hidden_layers];
        let policy = GaussianPolicy::new(state_dim, action_dim, &hidden, &mut init);
        let mut q_sizes = vec![state_dim + action_dim];
        q_sizes.extend_from_slice(&hidden);
        q_sizes.push(1);
        let q1 = Mlp::new(&q_sizes, &mut init);
        let q2 = Mlp::new(&q_sizes, &mut init);
        let lr = config.learning_rate;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        Ok(Self {
            target_entropy: config.target_entropy.unwrap_or(-(action_dim as f64)),
            log_alpha: config.init_log_alpha,
            opt_policy: Adam::new(policy.net.n_params(), lr, b1, b2),
            opt_q1: Adam::new(q1.n_params(), lr, b1, b2),
            opt_q2: Adam::new(q2.n_params(), lr, b1, b2),
            opt_alpha: Adam::new(1, lr, b1, b2),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            policy,
            config,
            rng: rngs::stream(seed, rngs::STREAM_AGENT),
            updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn state_dim(&self) -> usize {
        self.policy.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.action_dim
    }

    fn normal_noise(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    /// Stochastic action for exploration, using the caller's generator.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Vec<f64> {
        let noise: Vec<f64> = (0..self.action_dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.policy.evaluate(state, 1, &noise).action
    }

    /// Exploration-free action `tanh(μ(s))`.
    pub fn act_deterministic(&self, state: &[f64]) -> Vec<f64> {
        self.policy.deterministic_action(state)
    }

    /// One update of temperature, critics, actor and targets on `batch`.
    ///
    /// When `cascade_occupancies` is given the actor uses the invariance
    /// penalised loss with weight `lambda_irm`; otherwise the plain loss.
    pub fn train_step(
        &mut self,
        batch: &SampledBatch,
        cascade_occupancies: Option<&[usize]>,
    ) -> Result<StepStats> {
        let t = Transitions::from_batch(batch)?;
        let d = self.action_dim();
        let noise_pi = self.normal_noise(t.batch * d);
        let noise_next = self.normal_noise(t.batch * d);
        let alpha = self.alpha();

        // temperature, from the current policy's log-density
        let ev = self.policy.evaluate(&t.states, t.batch, &noise_pi);
        let mean_log_prob = ev.log_prob.iter().sum::<f64>() / t.batch as f64;
        let (_, d_log_alpha) =
            losses::entropy_coef_loss(self.log_alpha, mean_log_prob, self.target_entropy);
        let mut la = [self.log_alpha];
        self.opt_alpha.step(&mut la, &[d_log_alpha]);
        self.log_alpha = la[0];

        // critics
        let targets = losses::td_targets(
            &self.policy,
            &self.q1_target,
            &self.q2_target,
            &t,
            &noise_next,
            self.config.gamma,
            alpha,
        )?;
        let l1 = losses::q_loss(&self.q1, &t, &targets)?;
        self.opt_q1.step(self.q1.params_mut(), &l1.grad);
        let l2 = losses::q_loss(&self.q2, &t, &targets)?;
        self.opt_q2.step(self.q2.params_mut(), &l2.grad);

        // actor
        let pl: PolicyLoss = match cascade_occupancies {
            Some(occ) => losses::irm_policy_loss(
                &self.policy,
                &self.q1,
                &t.states,
                t.batch,
                &noise_pi,
                alpha,
                &t.source_ids,
                occ,
                self.config.lambda_irm,
            )?,
            None => {
                losses::policy_loss(&self.policy, &self.q1, &t.states, t.batch, &noise_pi, alpha)?
            }
        };
        self.opt_policy.step(self.policy.net.params_mut(), &pl.grad);

        self.q1_target.polyak_from(&self.q1, self.config.tau);
        self.q2_target.polyak_from(&self.q2, self.config.tau);
        self.updates += 1;

        if !self.log_alpha.is_finite() {
            return Err(Error::NonFinite {
                context: "entropy coefficient",
                detail: format!("log alpha {}", self.log_alpha),
            });
        }
        Ok(StepStats {
            q1_loss: l1.loss,
            q2_loss: l2.loss,
            policy_loss: pl.loss,
            irm_penalty: pl.penalty,
            alpha,
            mean_log_prob,
        })
    }

    /// Writes `agent.bin` (little-endian `f64` parameters of every network,
    /// then `log α`) and an `agent.json` sidecar describing the layout.
    pub fn save_checkpoint(&self, dir: &Path, seed: u64, global_step: u64) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let nets: [(&str, &Mlp); 5] = [
            ("policy", &self.policy.net),
            ("q1", &self.q1),
            ("q2", &self.q2),
            ("q1_target", &self.q1_target),
            ("q2_target", &self.q2_target),
        ];
        let mut bytes = Vec::new();
        let mut layout = Vec::new();
        let mut offset = 0;
        for (name, net) in nets {
            layout.push(TensorLayout {
                name: name.to_string(),
                sizes: net.sizes().to_vec(),
                offset,
                len: net.n_params(),
            });
            offset += net.n_params();
            for p in net.params() {
                bytes.extend_from_slice(&p.to_le_bytes());
            }
        }
        layout.push(TensorLayout {
            name: "log_alpha".into(),
            sizes: vec![1],
            offset,
            len: 1,
        });
        bytes.extend_from_slice(&self.log_alpha.to_le_bytes());
        let meta = CheckpointMeta {
            format: "f64-le".into(),
            seed,
            global_step,
            updates: self.updates,
            tensors: layout,
            config: self.config.clone(),
        };
        let bin = dir.join("agent.bin");
        fs::File::create(&bin)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(&bin, e))?;
        let json = dir.join("agent.json");
        fs::write(&json, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&json, e))?;
        Ok(())
    }

    /// Restores network parameters and `log α` written by
    /// [`save_checkpoint`](Self::save_checkpoint). Optimizer moments are not
    /// part of the checkpoint.
    pub fn load_checkpoint(&mut self, dir: &Path) -> Result<CheckpointMeta> {
        let json = dir.join("agent.json");
        let meta: CheckpointMeta =
            serde_json::from_str(&fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?)?;
        let bin = dir.join("agent.bin");
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        for t in &meta.tensors {
            let slice = values
                .get(t.offset..t.offset + t.len)
                .ok_or_else(|| Error::Snapshot(format!("checkpoint truncated at {}", t.name)))?
                .to_vec();
            let target = match t.name.as_str() {
                "policy" => &mut self.policy.net,
                "q1" => &mut self.q1,
                "q2" => &mut self.q2,
                "q1_target" => &mut self.q1_target,
                "q2_target" => &mut self.q2_target,
                "log_alpha" => {
                    self.log_alpha = slice[0];
                    continue;
                }
                other => return Err(Error::Snapshot(format!("unknown tensor {other}"))),
            };
            *target = Mlp::from_params(&t.sizes, slice)
                .filter(|m| m.sizes() == target.sizes())
                .ok_or_else(|| Error::Snapshot(format!("shape mismatch for {}", t.name)))?;
        }
        self.updates = meta.updates;
        Ok(meta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorLayout {
    pub name: String,
    pub sizes: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub seed: u64,
    pub global_step: u64,
    pub updates: u64,
    pub tensors: Vec<TensorLayout>,
    pub config: SacConfig,
}
