//! Diagonal Gaussian policy head with optional tanh squashing.
//!
//! The network emits `(μ, log σ)` per action dimension. Actions are drawn by
//! reparameterisation, `u = μ + σ·ε`, `a = tanh(u)`, with the log-density
//! corrected for the squash:
//! `log π(a|s) = Σ log N(u; μ, σ) − Σ log(1 − tanh²(u))`.

use rand::Rng;

use super::mlp::{Mlp, MlpForward};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Actions are kept this far from ±1 when the density is evaluated at them.
pub const SQUASH_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub action_dim: usize,
    pub squash: bool,
}

/// Everything a loss needs from one batched policy evaluation.
#[derive(Debug, Clone)]
pub struct PolicyEval {
    pub fwd: MlpForward,
    pub batch: usize,
    pub mu: Vec<f64>,
    /// Clamped log standard deviation.
    pub log_std: Vec<f64>,
    pub std: Vec<f64>,
    /// Whether the raw log-std fell outside the clamp (zero gradient).
    pub log_std_clamped: Vec<bool>,
    pub eps: Vec<f64>,
    pub u: Vec<f64>,
    pub action: Vec<f64>,
    /// Per-row log-density of the emitted action.
    pub log_prob: Vec<f64>,
}

/// Upstream gradients for [`GaussianPolicy::backward`], all per row × dim
/// except `d_log_prob` which is per row.
#[derive(Debug, Clone)]
pub struct PolicyUpstream {
    pub d_log_prob: Vec<f64>,
    pub d_action: Vec<f64>,
    /// Gradients that act on μ and log σ directly (not through the action).
    pub direct: Option<(Vec<f64>, Vec<f64>)>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Self {
            net: Mlp::new(&sizes, rng),
            action_dim,
            squash: true,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Evaluates the policy on `states` with standard-normal `noise`
    /// (batch × action_dim).
    pub fn evaluate(&self, states: &[f64], batch: usize, noise: &[f64]) -> PolicyEval {
        let d = self.action_dim;
        assert_eq!(noise.len(), batch * d, "noise shape");
        let fwd = self.net.forward(states, batch);
        let out = fwd.output();
        let n = batch * d;
        let mut ev = PolicyEval {
            batch,
            mu: Vec::with_capacity(n),
            log_std: Vec::with_capacity(n),
            std: Vec::with_capacity(n),
            log_std_clamped: Vec::with_capacity(n),
            eps: noise.to_vec(),
            u: Vec::with_capacity(n),
            action: Vec::with_capacity(n),
            log_prob: vec![0.0; batch],
            fwd: fwd.clone(),
        };
        for b in 0..batch {
            let row = &out[b * 2 * d..(b + 1) * 2 * d];
            let mut lp = 0.0;
            for j in 0..d {
                let mu = row[j];
                let raw = row[d + j];
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let sd = ls.exp();
                let e = noise[b * d + j];
                let u = mu + sd * e;
                lp += -0.5 * e * e - ls - HALF_LN_2PI;
                let a = if self.squash {
                    lp -= log1m_tanh2(u);
                    u.tanh()
                } else {
                    u
                };
                ev.mu.push(mu);
                ev.log_std.push(ls);
                ev.std.push(sd);
                ev.log_std_clamped.push(raw != ls);
                ev.u.push(u);
                ev.action.push(a);
            }
            ev.log_prob[b] = lp;
        }
        ev
    }

    /// Mean action, squashed if the policy squashes.
    pub fn deterministic_action(&self, state: &[f64]) -> Vec<f64> {
        let fwd = self.net.forward(state, 1);
        let mu = &fwd.output()[..self.action_dim];
        if self.squash {
            mu.iter().map(|m| m.tanh()).collect()
        } else {
            mu.to_vec()
        }
    }

    /// Log-density of an arbitrary action under the distribution with the
    /// given (already clamped) parameters.
    pub fn log_density_at(&self, action: f64, mu: f64, log_std: f64) -> f64 {
        if self.squash {
            squashed_log_density(action, mu, log_std)
        } else {
            gaussian_log_density(action, mu, log_std)
        }
    }

    /// Back-propagates through the reparameterised sample into the network.
    pub fn backward(&self, ev: &PolicyEval, up: &PolicyUpstream, grad_params: &mut [f64]) {
        let d = self.action_dim;
        let mut grad_out = vec![0.0; ev.batch * 2 * d];
        for b in 0..ev.batch {
            let c = up.d_log_prob[b];
            for j in 0..d {
                let i = b * d + j;
                let (dlogp_du, da_du) = if self.squash {
                    let a = ev.action[i];
                    (2.0 * a, 1.0 - a * a)
                } else {
                    (0.0, 1.0)
                };
                let d_u = c * dlogp_du + up.d_action[i] * da_du;
                let mut d_mu = d_u;
                let mut d_ls = d_u * ev.std[i] * ev.eps[i] - c;
                if let Some((dm, dl)) = &up.direct {
                    d_mu += dm[i];
                    d_ls += dl[i];
                }
                grad_out[b * 2 * d + j] = d_mu;
                grad_out[b * 2 * d + d + j] = if ev.log_std_clamped[i] { 0.0 } else { d_ls };
            }
        }
        self.net
            .backward(&ev.fwd, &grad_out, Some(grad_params), false);
    }
}

/// `log(1 − tanh²(u))`, stable for large `|u|`.
pub fn log1m_tanh2(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn gaussian_log_density(x: f64, mu: f64, log_std: f64) -> f64 {
    let z = (x - mu) / log_std.exp();
    -0.5 * z * z - log_std - HALF_LN_2PI
}

/// Density of `tanh(u)`, `u ~ N(μ, σ)`, evaluated at `a ∈ (−1, 1)`.
pub fn squashed_log_density(a: f64, mu: f64, log_std: f64) -> f64 {
    gaussian_log_density(a.atanh(), mu, log_std) - (1.0 - a * a).ln()
}

/// Per-element derivative `x · ∂/∂x log π(x|s)` at the sampled action, with
/// its total derivatives with respect to μ and log σ.
///
/// The sample is held as a function of the parameters through `u = μ + σε`.
/// Near the squash boundary the action is clamped to `±(1 − SQUASH_EPS)` and
/// treated as a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleScore {
    pub value: f64,
    pub d_mu: f64,
    pub d_log_std: f64,
}

pub fn scale_score(squash: bool, mu: f64, sd: f64, eps: f64, action: f64) -> ScaleScore {
    let var = sd * sd;
    if !squash {
        // g = −x·z/σ², x = μ + σε, z = x − μ = σε
        let x = action;
        let z = sd * eps;
        let value = -x * z / var;
        let d_mu = -z / var;
        let (dx, dz) = (sd * eps, sd * eps);
        let d_log_std = -(dx * z + x * dz) / var + 2.0 * x * z / var;
        return ScaleScore {
            value,
            d_mu,
            d_log_std,
        };
    }
    let limit = 1.0 - SQUASH_EPS;
    let clamped = action.abs() > limit;
    let x = action.clamp(-limit, limit);
    let one_m = 1.0 - x * x;
    let (z, dx_mu, dx_ls, dz_mu, dz_ls) = if clamped {
        (x.atanh() - mu, 0.0, 0.0, -1.0, 0.0)
    } else {
        (sd * eps, one_m, one_m * sd * eps, 0.0, sd * eps)
    };
    // g = h(x)·k, h = x/(1 − x²), k = 2x − z/σ²
    let h = x / one_m;
    let dh = (1.0 + x * x) / (one_m * one_m);
    let k = 2.0 * x - z / var;
    let value = h * k;
    let d_mu = dh * dx_mu * k + h * (2.0 * dx_mu - dz_mu / var);
    let d_log_std = dh * dx_ls * k + h * (2.0 * dx_ls - dz_ls / var + 2.0 * z / var);
    ScaleScore {
        value,
        d_mu,
        d_log_std,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_log1m_tanh2() {
        for u in [-30.0f64, -5.0, -0.3, 0.0, 0.7, 4.0, 25.0] {
            let naive = (1.0 - u.tanh().powi(2)).ln();
            let stable = log1m_tanh2(u);
            if naive.is_finite() && u.abs() < 15.0 {
                assert!((naive - stable).abs() < 1e-9, "u={u}");
            }
            assert!(stable.is_finite());
        }
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        for &(mu, ls) in &[(0.0, 0.0), (0.8, -0.5), (-1.5, 0.4)] {
            let n = 200_000;
            let h = 2.0 / n as f64;
            let total: f64 = (0..n)
                .map(|i| squashed_log_density(-1.0 + (i as f64 + 0.5) * h, mu, ls).exp() * h)
                .sum();
            assert!((total - 1.0).abs() < 1e-3, "mu={mu} ls={ls}: {total}");
        }
    }

    #[test]
    fn scale_score_matches_w_difference() {
        // d/dw log π(w·a) at w = 1 equals a · ∂ log π / ∂x at x = a
        for squash in [true, false] {
            for &(mu, ls, eps) in &[(0.2, -0.3, 0.7), (-0.5, 0.1, -1.2), (1.1, -1.0, 0.4)] {
                let sd = f64::exp(ls);
                let u: f64 = mu + sd * eps;
                let a = if squash { u.tanh() } else { u };
                let dens = |x: f64| {
                    if squash {
                        squashed_log_density(x, mu, ls)
                    } else {
                        gaussian_log_density(x, mu, ls)
                    }
                };
                let h = 1e-6;
                let fd = (dens((1.0 + h) * a) - dens((1.0 - h) * a)) / (2.0 * h);
                let g = scale_score(squash, mu, sd, eps, a).value;
                assert!(
                    (fd - g).abs() < 1e-6 * (1.0 + g.abs()),
                    "squash={squash}: {fd} vs {g}"
                );
            }
        }
    }

    #[test]
    fn scale_score_parameter_derivatives() {
        for squash in [true, false] {
            let (mu, ls, eps) = (0.3f64, -0.4f64, 0.9f64);
            let f = |mu: f64, ls: f64| {
                let sd = ls.exp();
                let u = mu + sd * eps;
                let a = if squash { u.tanh() } else { u };
                scale_score(squash, mu, sd, eps, a).value
            };
            let sd = ls.exp();
            let u = mu + sd * eps;
            let a = if squash { u.tanh() } else { u };
            let g = scale_score(squash, mu, sd, eps, a);
            let h = 1e-6;
            let fd_mu = (f(mu + h, ls) - f(mu - h, ls)) / (2.0 * h);
            let fd_ls = (f(mu, ls + h) - f(mu, ls - h)) / (2.0 * h);
            assert!((fd_mu - g.d_mu).abs() < 1e-6 * (1.0 + fd_mu.abs()));
            assert!((fd_ls - g.d_log_std).abs() < 1e-6 * (1.0 + fd_ls.abs()));
        }
    }

    #[test]
    fn clamped_boundary_stays_finite() {
        let g = scale_score(true, 30.0, 1.0, 0.0, 1.0);
        assert!(g.value.is_finite() && g.d_mu.is_finite() && g.d_log_std.is_finite());
    }
}
