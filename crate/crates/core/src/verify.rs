//! Self-check suite run by `mtr verify`: finite-difference checks of every
//! analytic gradient plus property checks of the buffers, retention laws
//! and environment.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::agent::{self, GaussianPolicy, Mlp, SacAgent, SacConfig};
use crate::envsim::{make_eval_env, EVAL_GRAVITIES};
use crate::replay::{
    apportion, BufferRegistry, BufferSpec, Experience, MtrBuffer, ReplayStrategy, SampledBatch,
};
use crate::retention::{expected_fill_count, simulate_fill_count, t_hat, RetentionParams};
use crate::rngs;

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

/// Tolerance on the relative error between analytic and finite-difference
/// gradients.
pub const GRAD_REL_TOL: f64 = 1e-4;

/// `‖a − b‖ / max(‖a‖, ‖b‖)` (zero when both vanish).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every entry of `params`.
pub fn central_difference(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

struct Fixture {
    policy: GaussianPolicy,
    q: Mlp,
    q_target: Mlp,
    states: Vec<f64>,
    next_states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    noise: Vec<f64>,
    batch: usize,
}

const STATE_DIM: usize = 3;
const ACTION_DIM: usize = 2;

fn fixture(seed: u64, batch: usize) -> Fixture {
    let mut rng = rngs::stream(seed, 0xfd);
    let hidden = [8, 8];
    let policy = GaussianPolicy::new(STATE_DIM, ACTION_DIM, &hidden, &mut rng);
    let q = Mlp::new(&[STATE_DIM + ACTION_DIM, 8, 8, 1], &mut rng);
    let q_target = Mlp::new(&[STATE_DIM + ACTION_DIM, 8, 8, 1], &mut rng);
    let mut normal = |n: usize| {
        (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<_>>()
    };
    let states = normal(batch * STATE_DIM);
    let next_states = normal(batch * STATE_DIM);
    let noise = normal(batch * ACTION_DIM);
    let rewards = normal(batch);
    let actions = normal(batch * ACTION_DIM)
        .iter()
        .map(|x| x.tanh())
        .collect();
    Fixture {
        policy,
        q,
        q_target,
        states,
        next_states,
        actions,
        rewards,
        noise,
        batch,
    }
}

fn with_params(policy: &GaussianPolicy, params: &[f64]) -> GaussianPolicy {
    let mut p = policy.clone();
    p.net.params_mut().copy_from_slice(params);
    p
}

fn grad_check(name: &'static str, analytic: &[f64], numeric: &[f64]) -> Check {
    let err = relative_error(analytic, numeric);
    Check::new(
        name,
        err < GRAD_REL_TOL && err.is_finite(),
        format!("relative error {err:.2e}"),
    )
}

/// Finite-difference checks of the policy loss, invariance w-gradient,
/// invariance penalty, critic loss and temperature loss.
pub fn gradient_checks(seed: u64) -> Vec<Check> {
    let f = fixture(seed, 6);
    let alpha = 0.7;
    let h = 1e-5;
    let mut out = Vec::new();

    let pl = agent::policy_loss(&f.policy, &f.q, &f.states, f.batch, &f.noise, alpha)
        .expect("finite loss");
    let num = central_difference(f.policy.net.params(), h, |p| {
        agent::policy_loss(
            &with_params(&f.policy, p),
            &f.q,
            &f.states,
            f.batch,
            &f.noise,
            alpha,
        )
        .unwrap()
        .loss
    });
    out.push(grad_check("policy loss gradient", &pl.grad, &num));

    // w-gradient value against a difference quotient in w itself
    let wg = agent::irm_w_gradient(&f.policy, &f.states, f.batch, &f.noise, alpha).unwrap();
    let ev = f.policy.evaluate(&f.states, f.batch, &f.noise);
    let scaled_logp = |w: f64| {
        let mut s = 0.0;
        for i in 0..f.batch * ACTION_DIM {
            s += f
                .policy
                .log_density_at(w * ev.action[i], ev.mu[i], ev.log_std[i]);
        }
        alpha * s / f.batch as f64
    };
    let dw = (scaled_logp(1.0 + h) - scaled_logp(1.0 - h)) / (2.0 * h);
    let err = (wg.loss - dw).abs() / wg.loss.abs().max(dw.abs()).max(1e-12);
    out.push(Check::new(
        "w-gradient value",
        err < GRAD_REL_TOL,
        format!("relative error {err:.2e}"),
    ));
    let num = central_difference(f.policy.net.params(), h, |p| {
        agent::irm_w_gradient(
            &with_params(&f.policy, p),
            &f.states,
            f.batch,
            &f.noise,
            alpha,
        )
        .unwrap()
        .loss
    });
    out.push(grad_check("w-gradient parameter gradient", &wg.grad, &num));

    let sources = [1, 1, 2, 3, 0, 2];
    let occ = [40, 25, 10];
    let lambda = 3.0;
    let irm = agent::irm_policy_loss(
        &f.policy, &f.q, &f.states, f.batch, &f.noise, alpha, &sources, &occ, lambda,
    )
    .unwrap();
    let num = central_difference(f.policy.net.params(), h, |p| {
        agent::irm_policy_loss(
            &with_params(&f.policy, p),
            &f.q,
            &f.states,
            f.batch,
            &f.noise,
            alpha,
            &sources,
            &occ,
            lambda,
        )
        .unwrap()
        .loss
    });
    out.push(grad_check(
        "invariance-penalised policy gradient",
        &irm.grad,
        &num,
    ));

    let batch = SampledBatch {
        experiences: (0..f.batch)
            .map(|b| Experience {
                state: f.states[b * STATE_DIM..(b + 1) * STATE_DIM].to_vec(),
                action: f.actions[b * ACTION_DIM..(b + 1) * ACTION_DIM].to_vec(),
                reward: f.rewards[b],
                next_state: f.next_states[b * STATE_DIM..(b + 1) * STATE_DIM].to_vec(),
                terminal: b == 2,
                insert_step: b as u64,
            })
            .collect(),
        source_ids: vec![0; f.batch],
    };
    let t = agent::Transitions::from_batch(&batch).unwrap();
    let targets = agent::td_targets(
        &f.policy,
        &f.q_target,
        &f.q_target,
        &t,
        &f.noise,
        0.99,
        alpha,
    )
    .unwrap();
    let ql = agent::q_loss(&f.q, &t, &targets).unwrap();
    let num = central_difference(f.q.params(), h, |p| {
        let q = Mlp::from_params(f.q.sizes(), p.to_vec()).unwrap();
        agent::q_loss(&q, &t, &targets).unwrap().loss
    });
    out.push(grad_check("critic loss gradient", &ql.grad, &num));

    let (mean_lp, target) = (pl.mean_log_prob, -(ACTION_DIM as f64));
    let (_, d) = agent::entropy_coef_loss(0.3, mean_lp, target);
    let num = central_difference(&[0.3], h, |p| {
        agent::entropy_coef_loss(p[0], mean_lp, target).0
    });
    out.push(grad_check("temperature loss gradient", &[d], &num));
    out
}

/// Structural consequences of the invariance objective.
pub fn irm_reduction_checks(seed: u64) -> Vec<Check> {
    let f = fixture(seed, 6);
    let sources = [1, 2, 2, 3, 1, 0];
    let occ = [10, 10, 5];
    let plain = agent::policy_loss(&f.policy, &f.q, &f.states, f.batch, &f.noise, 0.4).unwrap();
    let zero = agent::irm_policy_loss(
        &f.policy, &f.q, &f.states, f.batch, &f.noise, 0.4, &sources, &occ, 0.0,
    )
    .unwrap();
    let same = plain.loss.to_bits() == zero.loss.to_bits()
        && plain
            .grad
            .iter()
            .zip(&zero.grad)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    let no_alpha = agent::irm_policy_loss(
        &f.policy, &f.q, &f.states, f.batch, &f.noise, 0.0, &sources, &occ, 5.0,
    )
    .unwrap();

    // whole agents: zero weight with the cascade path equals the plain path
    let train = |with_cascade: bool| {
        let config = SacConfig {
            hidden_width: 8,
            lambda_irm: 0.0,
            ..SacConfig::default()
        };
        let mut ag = SacAgent::new(3, 1, config, seed).unwrap();
        let mut buf = MtrBuffer::<Experience>::new(40, 4, 0.7, seed).unwrap();
        let mut rng = rngs::stream(seed, 0xab);
        for i in 0..120u64 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            buf.push(Experience {
                next_state: s.iter().map(|x| x * 0.9).collect(),
                state: s,
                action: vec![rng.random_range(-1.0..1.0)],
                reward: rng.random_range(-1.0..0.0),
                terminal: false,
                insert_step: i,
            });
            if i >= 16 {
                let b = ReplayStrategy::sample(&mut buf, 16).unwrap();
                let occ = buf.cascade_occupancies();
                ag.train_step(&b, if with_cascade { occ.as_deref() } else { None })
                    .unwrap();
            }
        }
        ag.policy
            .net
            .params()
            .iter()
            .map(|x| x.to_bits())
            .collect::<Vec<_>>()
    };
    vec![
        Check::new(
            "zero invariance weight is bit-identical (loss)",
            same,
            format!("{} vs {}", plain.loss, zero.loss),
        ),
        Check::new(
            "zero invariance weight is bit-identical (training)",
            train(true) == train(false),
            String::new(),
        ),
        Check::new(
            "zero temperature gives zero penalty",
            no_alpha.penalty == 0.0,
            format!("penalty {}", no_alpha.penalty),
        ),
    ]
}

fn squashed_density_mass(mu: f64, log_std: f64, cells: usize) -> f64 {
    // midpoint rule over (−1, 1)
    let w = 2.0 / cells as f64;
    (0..cells)
        .map(|i| {
            let a = -1.0 + (i as f64 + 0.5) * w;
            agent::policy::squashed_log_density(a, mu, log_std).exp() * w
        })
        .sum()
}

pub fn buffer_checks(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = rngs::stream(seed, 0xb0);
    let mut exact = true;
    for _ in 0..2_000 {
        let occ: Vec<usize> = (0..rng.random_range(1..12))
            .map(|_| rng.random_range(0..500))
            .collect();
        let batch = rng.random_range(0..300);
        let q = apportion(&occ, batch, &mut rng);
        let total: usize = occ.iter().sum();
        exact &= q.iter().sum::<usize>() == batch.min(total)
            && q.iter()
                .zip(&occ)
                .all(|(q, o)| q <= o || *o == 0 && *q == 0);
    }
    out.push(Check::new("quota sums are exact", exact, String::new()));

    let mut invariants = true;
    for (n_sub, beta) in [(4usize, 0.0), (4, 0.5), (5, 1.0), (10, 0.85)] {
        let mut b = MtrBuffer::<u64>::new(n_sub * 20, n_sub, beta, seed).unwrap();
        for i in 0..5_000u64 {
            b.push(i);
            invariants &= b.invariants_hold() && b.len() <= b.capacity();
        }
    }
    out.push(Check::new(
        "cascade invariants hold after every push",
        invariants,
        String::new(),
    ));

    let registry = BufferRegistry::with_builtins();
    let mut bounded = true;
    for name in registry.names() {
        let spec = BufferSpec {
            capacity: 50,
            n_sub: 5,
            beta_mtr: 0.6,
            seed,
        };
        let mut b = registry.create(name, &spec).unwrap();
        for i in 0..500u64 {
            b.push(Experience {
                state: vec![i as f64],
                action: vec![0.0],
                reward: 0.0,
                next_state: vec![0.0],
                terminal: false,
                insert_step: i,
            });
            bounded &= b.len() <= b.capacity();
        }
        bounded &= b.sample(32).map(|s| s.len() == 32).unwrap_or(false);
    }
    out.push(Check::new(
        "every strategy stays within capacity",
        bounded,
        String::new(),
    ));
    out
}

pub fn retention_checks(seed: u64) -> Vec<Check> {
    let p = RetentionParams::new(200, 5, 0.7).unwrap();
    let analytic = expected_fill_count(&p).value();
    let runs: Vec<f64> = (0..40)
        .filter_map(|s| simulate_fill_count(&p, seed + s, 1_000_000).ok().flatten())
        .map(|n| n as f64)
        .collect();
    let mean = runs.iter().sum::<f64>() / runs.len().max(1) as f64;
    let rel = (mean - analytic).abs() / analytic;
    let t1 = t_hat(&p, 1).unwrap();
    vec![
        Check::new(
            "fill count matches its closed form",
            runs.len() == 40 && rel < 0.05,
            format!("{mean:.0} vs {analytic:.0}"),
        ),
        Check::new(
            "first anchor age",
            (t1 - 40.0 * 0.7 / 0.3 * (1.0 / 0.7 - 1.0)).abs() < 1e-9,
            format!("{t1}"),
        ),
    ]
}

pub fn environment_checks() -> Vec<Check> {
    let mut ok = true;
    let mut rng = rngs::stream(0, rngs::STREAM_EVAL);
    for g in EVAL_GRAVITIES {
        let mut env = make_eval_env(g).unwrap();
        env.reset_with_gravity(g, &mut rng);
        for _ in 0..200 {
            let o = env.step(0.3).unwrap();
            ok &= o.observation.iter().all(|x| x.is_finite()) && o.observation[2] == g;
        }
    }
    vec![Check::new(
        "evaluation environments keep their gravity",
        ok,
        String::new(),
    )]
}

pub fn density_checks() -> Vec<Check> {
    let worst = [(0.0, 0.0), (0.5, -0.5), (-1.0, 0.3), (2.0, -1.5)]
        .iter()
        .map(|&(m, s)| (squashed_density_mass(m, s, 200_000) - 1.0).abs())
        .fold(0.0, f64::max);
    vec![Check::new(
        "squashed density integrates to one",
        worst < 1e-3,
        format!("max deviation {worst:.2e}"),
    )]
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    let mut all = gradient_checks(7);
    all.extend(irm_reduction_checks(11));
    all.extend(density_checks());
    all.extend(buffer_checks(3));
    all.extend(retention_checks(5));
    all.extend(environment_checks());
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let failed: Vec<_> = run_all().into_iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }

    #[test]
    fn relative_error_detects_a_wrong_gradient() {
        assert!(relative_error(&[1.0, 2.0], &[1.0, 2.0]) == 0.0);
        assert!(relative_error(&[1.0, 2.0], &[1.0, 2.1]) > GRAD_REL_TOL);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }
}
