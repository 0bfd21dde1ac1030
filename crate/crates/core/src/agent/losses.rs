//! Loss functions of the actor-critic, each returning its value together with
//! the analytic gradient with respect to the network being trained.
//!
//! Randomness enters only through explicit standard-normal `noise` arguments,
//! so every loss is a deterministic function of its inputs and can be checked
//! against finite differences.

use super::mlp::Mlp;
use super::policy::{scale_score, GaussianPolicy, PolicyEval, PolicyUpstream};
use crate::replay::SampledBatch;
use crate::{Error, Result};

/// A sampled batch laid out as row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    pub batch: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub terminals: Vec<bool>,
    pub source_ids: Vec<usize>,
}

impl Transitions {
    pub fn from_batch(batch: &SampledBatch) -> Result<Self> {
        let first = batch.experiences.first().ok_or(Error::EmptyBuffer)?;
        let (state_dim, action_dim) = (first.state.len(), first.action.len());
        let n = batch.len();
        let mut t = Transitions {
            batch: n,
            state_dim,
            action_dim,
            states: Vec::with_capacity(n * state_dim),
            actions: Vec::with_capacity(n * action_dim),
            rewards: Vec::with_capacity(n),
            next_states: Vec::with_capacity(n * state_dim),
            terminals: Vec::with_capacity(n),
            source_ids: batch.source_ids.clone(),
        };
        for e in &batch.experiences {
            if e.state.len() != state_dim
                || e.next_state.len() != state_dim
                || e.action.len() != action_dim
            {
                return Err(Error::Config(
                    "inconsistent experience dimensions in batch".into(),
                ));
            }
            t.states.extend_from_slice(&e.state);
            t.actions.extend_from_slice(&e.action);
            t.rewards.push(e.reward);
            t.next_states.extend_from_slice(&e.next_state);
            t.terminals.push(e.terminal);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    /// Total loss (empirical term plus weighted penalty, if any).
    pub loss: f64,
    pub empirical: f64,
    pub penalty: f64,
    pub grad: Vec<f64>,
    pub mean_log_prob: f64,
}

/// Row-wise concatenation `[state | action]`.
pub fn concat_rows(
    states: &[f64],
    state_dim: usize,
    actions: &[f64],
    action_dim: usize,
    batch: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * (state_dim + action_dim));
    for b in 0..batch {
        out.extend_from_slice(&states[b * state_dim..(b + 1) * state_dim]);
        out.extend_from_slice(&actions[b * action_dim..(b + 1) * action_dim]);
    }
    out
}

/// `mean_b [α·log π(a_b|s_b) − Q₁(s_b, a_b)]` and the upstream gradients
/// feeding the policy backward pass.
fn empirical_term(
    policy: &GaussianPolicy,
    q1: &Mlp,
    states: &[f64],
    ev: &PolicyEval,
    alpha: f64,
) -> (f64, PolicyUpstream) {
    let batch = ev.batch;
    let (sd, ad) = (policy.state_dim(), policy.action_dim);
    let q_in = concat_rows(states, sd, &ev.action, ad, batch);
    let q_fwd = q1.forward(&q_in, batch);
    let q = q_fwd.output();
    let inv = 1.0 / batch as f64;
    let loss = (0..batch)
        .map(|b| alpha * ev.log_prob[b] - q[b])
        .sum::<f64>()
        * inv;
    let d_q = vec![-inv; batch];
    let d_in = q1
        .backward(&q_fwd, &d_q, None, true)
        .expect("input gradient requested");
    let mut d_action = Vec::with_capacity(batch * ad);
    for b in 0..batch {
        d_action.extend_from_slice(&d_in[b * (sd + ad) + sd..(b + 1) * (sd + ad)]);
    }
    let up = PolicyUpstream {
        d_log_prob: vec![alpha * inv; batch],
        d_action,
        direct: None,
    };
    (loss, up)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-experience max-entropy policy loss, averaged over the batch, with one
/// reparameterised action per state. `α` and `Q₁` are held fixed.
pub fn policy_loss(
    policy: &GaussianPolicy,
    q1: &Mlp,
    states: &[f64],
    batch: usize,
    noise: &[f64],
    alpha: f64,
) -> Result<PolicyLoss> {
    if batch == 0 {
        return Err(Error::EmptyBuffer);
    }
    let ev = policy.evaluate(states, batch, noise);
    let (loss, up) = empirical_term(policy, q1, states, &ev, alpha);
    let mut grad = vec![0.0; policy.net.n_params()];
    policy.backward(&ev, &up, &mut grad);
    let out = PolicyLoss {
        loss,
        empirical: loss,
        penalty: 0.0,
        grad,
        mean_log_prob: mean(&ev.log_prob),
    };
    check_finite("policy loss", &out)?;
    Ok(out)
}

/// Derivative of the batch policy loss with respect to a scalar `w` that
/// rescales the action inside `log π` only, taken at `w = 1`:
/// `α · mean_b Σ_j a_bj · ∂/∂x_j log π(x|s_b)|_{x=a_b}`.
///
/// Returned as a differentiable function of the policy parameters; `grad`
/// is its gradient.
pub fn irm_w_gradient(
    policy: &GaussianPolicy,
    states: &[f64],
    batch: usize,
    noise: &[f64],
    alpha: f64,
) -> Result<LossGrad> {
    if batch == 0 {
        return Err(Error::EmptyBuffer);
    }
    let ev = policy.evaluate(states, batch, noise);
    let d = policy.action_dim;
    let scale = alpha / batch as f64;
    let mut value = 0.0;
    let mut d_mu = vec![0.0; batch * d];
    let mut d_ls = vec![0.0; batch * d];
    for i in 0..batch * d {
        let s = scale_score(policy.squash, ev.mu[i], ev.std[i], ev.eps[i], ev.action[i]);
        value += s.value;
        d_mu[i] = scale * s.d_mu;
        d_ls[i] = scale * s.d_log_std;
    }
    let up = PolicyUpstream {
        d_log_prob: vec![0.0; batch],
        d_action: vec![0.0; batch * d],
        direct: Some((d_mu, d_ls)),
    };
    let mut grad = vec![0.0; policy.net.n_params()];
    policy.backward(&ev, &up, &mut grad);
    Ok(LossGrad {
        loss: value * scale,
        grad,
    })
}

/// Policy loss with the invariance penalty over cascade sub-buffers.
///
/// The empirical term covers the whole batch. Each cascade sub-buffer `i`
/// with at least one sampled row contributes
/// `(|D_i| / |D_cascade|) · (∂L_i/∂w)²`, where `∂L_i/∂w` is
/// [`irm_w_gradient`] over the rows drawn from it. Overflow rows
/// (`source_id == 0`) only enter the empirical term.
#[allow(clippy::too_many_arguments)]
pub fn irm_policy_loss(
    policy: &GaussianPolicy,
    q1: &Mlp,
    states: &[f64],
    batch: usize,
    noise: &[f64],
    alpha: f64,
    source_ids: &[usize],
    cascade_occupancies: &[usize],
    lambda: f64,
) -> Result<PolicyLoss> {
    if batch == 0 {
        return Err(Error::EmptyBuffer);
    }
    if source_ids.len() != batch {
        return Err(Error::Config("source_ids length differs from batch".into()));
    }
    let n_sub = cascade_occupancies.len();
    if let Some(&bad) = source_ids.iter().find(|&&s| s > n_sub) {
        return Err(Error::OutOfRange {
            what: "source id",
            detail: format!("{bad} with {n_sub} sub-buffers"),
        });
    }
    let ev = policy.evaluate(states, batch, noise);
    let (empirical, mut up) = empirical_term(policy, q1, states, &ev, alpha);

    let d = policy.action_dim;
    let cascade_total: usize = cascade_occupancies.iter().sum();
    let mut counts = vec![0usize; n_sub + 1];
    for &s in source_ids {
        counts[s] += 1;
    }
    let mut row_scores = Vec::with_capacity(batch * d);
    let mut sums = vec![0.0; n_sub + 1];
    for b in 0..batch {
        for j in 0..d {
            let i = b * d + j;
            let s = scale_score(policy.squash, ev.mu[i], ev.std[i], ev.eps[i], ev.action[i]);
            sums[source_ids[b]] += s.value;
            row_scores.push(s);
        }
    }
    // G_i = α · mean over rows of sub-buffer i
    let mut w_grad = vec![0.0; n_sub + 1];
    let mut weight = vec![0.0; n_sub + 1];
    let mut penalty = 0.0;
    if cascade_total > 0 {
        for i in 1..=n_sub {
            if counts[i] == 0 {
                continue;
            }
            weight[i] = cascade_occupancies[i - 1] as f64 / cascade_total as f64;
            w_grad[i] = alpha * sums[i] / counts[i] as f64;
            penalty += weight[i] * w_grad[i] * w_grad[i];
        }
    }

    let loss = if lambda == 0.0 {
        empirical
    } else {
        let mut d_mu = vec![0.0; batch * d];
        let mut d_ls = vec![0.0; batch * d];
        for (b, &src) in source_ids.iter().enumerate() {
            if src == 0 || counts[src] == 0 || weight[src] == 0.0 {
                continue;
            }
            let coef = lambda * weight[src] * 2.0 * w_grad[src] * alpha / counts[src] as f64;
            for j in 0..d {
                let i = b * d + j;
                d_mu[i] = coef * row_scores[i].d_mu;
                d_ls[i] = coef * row_scores[i].d_log_std;
            }
        }
        up.direct = Some((d_mu, d_ls));
        empirical + lambda * penalty
    };
    let mut grad = vec![0.0; policy.net.n_params()];
    policy.backward(&ev, &up, &mut grad);
    let out = PolicyLoss {
        loss,
        empirical,
        penalty,
        grad,
        mean_log_prob: mean(&ev.log_prob),
    };
    check_finite("irm policy loss", &out)?;
    Ok(out)
}

/// Soft TD targets `r + γ(1 − done)(min(Q̄₁, Q̄₂)(s', a') − α log π(a'|s'))`
/// with `a'` drawn fresh from the current policy.
#[allow(clippy::too_many_arguments)]
pub fn td_targets(
    policy: &GaussianPolicy,
    q1_target: &Mlp,
    q2_target: &Mlp,
    t: &Transitions,
    noise: &[f64],
    gamma: f64,
    alpha: f64,
) -> Result<Vec<f64>> {
    let ev = policy.evaluate(&t.next_states, t.batch, noise);
    let q_in = concat_rows(
        &t.next_states,
        t.state_dim,
        &ev.action,
        t.action_dim,
        t.batch,
    );
    let q1 = q1_target.forward(&q_in, t.batch);
    let q2 = q2_target.forward(&q_in, t.batch);
    let targets: Vec<f64> = (0..t.batch)
        .map(|b| {
            if t.terminals[b] || gamma == 0.0 {
                t.rewards[b]
            } else {
                let soft_v = q1.output()[b].min(q2.output()[b]) - alpha * ev.log_prob[b];
                t.rewards[b] + gamma * soft_v
            }
        })
        .collect();
    if let Some(bad) = targets.iter().position(|y| !y.is_finite()) {
        return Err(Error::NonFinite {
            context: "td target",
            detail: format!("row {bad}: {}", targets[bad]),
        });
    }
    Ok(targets)
}

/// `½ · mean_b (Q(s_b, a_b) − y_b)²` with targets held fixed.
pub fn q_loss(q: &Mlp, t: &Transitions, targets: &[f64]) -> Result<LossGrad> {
    let q_in = concat_rows(&t.states, t.state_dim, &t.actions, t.action_dim, t.batch);
    let fwd = q.forward(&q_in, t.batch);
    let inv = 1.0 / t.batch as f64;
    let mut loss = 0.0;
    let mut d_out = Vec::with_capacity(t.batch);
    for (qv, y) in fwd.output().iter().zip(targets) {
        let err = qv - y;
        loss += 0.5 * err * err * inv;
        d_out.push(err * inv);
    }
    let mut grad = vec![0.0; q.n_params()];
    q.backward(&fwd, &d_out, Some(&mut grad), false);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "q loss",
            detail: format!("{loss}"),
        });
    }
    Ok(LossGrad { loss, grad })
}

/// Temperature loss `−log α · (mean log π + target_entropy)` and its
/// derivative with respect to `log α`.
pub fn entropy_coef_loss(log_alpha: f64, mean_log_prob: f64, target_entropy: f64) -> (f64, f64) {
    let drive = mean_log_prob + target_entropy;
    (-log_alpha * drive, -drive)
}

fn check_finite(context: &'static str, out: &PolicyLoss) -> Result<()> {
    if !out.loss.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context,
            detail: format!(
                "loss {} (empirical {}, penalty {})",
                out.loss, out.empirical, out.penalty
            ),
        });
    }
    Ok(())
}
