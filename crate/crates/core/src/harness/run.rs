use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::agent::SacAgent;
use crate::envsim::{PointMassEnv, ScheduleRegistry, ScheduleSpec, ACTION_DIM, OBS_DIM};
use crate::replay::{BufferRegistry, BufferSpec, Experience, ReplayStrategy, NO_SUB_BUFFER};
use crate::retention::{age_histogram, write_age_hist_csv, AgeBin};
use crate::rngs;
use crate::{Error, Result, BUILD_ID};

pub const TRAIN_LOG: &str = "train_log.csv";
pub const EVAL_LOG: &str = "eval_log.csv";
pub const CONFIG_ECHO: &str = "config.json";
pub const AGE_HIST: &str = "age_hist.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const CHECKPOINTS: &str = "checkpoints";

const AGE_HIST_BINS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    pub global_step: u64,
    pub episode_index: u64,
    pub episode_return: f64,
    pub gravity_at_episode_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub seed: u64,
    pub global_step: u64,
    pub gravity: f64,
    pub episode_return: f64,
}

/// Why a seed stopped before `total_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub seed: u64,
    pub global_step: u64,
    pub message: String,
}

/// Everything one seed produced.
pub struct SeedOutcome {
    pub seed: u64,
    pub train: Vec<TrainRecord>,
    pub eval: Vec<EvalRecord>,
    pub cascade_ages: Vec<u64>,
    pub diagnostic: Option<Diagnostic>,
    pub agent: SacAgent,
    pub buffer: Box<dyn ReplayStrategy>,
    pub steps_done: u64,
}

/// Result of a whole experiment.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub train_rows: usize,
    pub eval_rows: usize,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    build_id: &'a str,
    #[serde(flatten)]
    config: &'a ExperimentConfig,
}

/// Deterministic evaluation: one frozen-policy episode per repetition at
/// `gravity`, returning the mean return.
pub fn evaluate_policy(
    agent: &SacAgent,
    config: &ExperimentConfig,
    gravity: f64,
    rng: &mut rngs::Rng,
) -> Result<f64> {
    let mut env = PointMassEnv::with_pinned_gravity(gravity)?;
    env.params = config.env_params();
    let mut total = 0.0;
    for _ in 0..config.episodes_per_eval {
        let mut obs = env.reset_with_gravity(gravity, rng);
        loop {
            let a = agent.act_deterministic(&obs);
            let out = env.step(a[0])?;
            total += out.reward;
            obs = out.observation;
            if out.done {
                break;
            }
        }
    }
    Ok(total / config.episodes_per_eval as f64)
}

/// Trains and evaluates one seed. Non-finite numbers end the seed early
/// with a diagnostic instead of an error.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let kind = config.agent_kind()?;
    let schedule = ScheduleRegistry::with_builtins().create(
        &config.schedule,
        &ScheduleSpec {
            total_steps: config.total_steps,
            adjustment_period: config.adjustment_period,
            cycles: config.sine_cycles,
            seed,
        },
    )?;
    let mut buffer = BufferRegistry::with_builtins().create(
        kind.buffer,
        &BufferSpec {
            capacity: config.buffer_capacity,
            n_sub: config.n_b,
            beta_mtr: config.beta_mtr,
            seed,
        },
    )?;
    let mut agent = SacAgent::new(OBS_DIM, ACTION_DIM, config.sac_config()?, seed)?;
    let mut env = PointMassEnv::new(config.env_params());
    let mut env_rng = rngs::stream(seed, rngs::STREAM_ENV);
    let mut explore_rng = rngs::stream(seed, rngs::STREAM_EXPLORE);
    let mut eval_rng = rngs::stream(seed, rngs::STREAM_EVAL);

    let mut train = Vec::new();
    let mut eval = Vec::new();
    let mut diagnostic = None;
    let mut steps_done = 0;

    if config.total_steps > 0 {
        let mut obs = env.reset(schedule.as_ref(), 0, &mut env_rng)?;
        let mut episode_gravity = env.g;
        let mut episode_return = 0.0;
        let mut episode = 0u64;
        for step in 0..config.total_steps {
            let action = if step < config.warmup {
                vec![explore_rng.random_range(-1.0..=1.0); ACTION_DIM]
            } else {
                agent.act(&obs, &mut explore_rng)
            };
            let out = match env.step(action[0]) {
                Ok(out) => out,
                Err(e) => {
                    diagnostic = Some(Diagnostic {
                        seed,
                        global_step: step,
                        message: e.to_string(),
                    });
                    break;
                }
            };
            buffer.push(Experience {
                state: obs.to_vec(),
                action,
                reward: out.reward,
                next_state: out.observation.to_vec(),
                terminal: false,
                insert_step: step,
            });
            episode_return += out.reward;
            steps_done = step + 1;

            if steps_done >= config.warmup && steps_done % config.train_frequency == 0 {
                let occupancies = if kind.irm {
                    buffer.cascade_occupancies()
                } else {
                    None
                };
                let trained = buffer
                    .sample(config.batch_size)
                    .and_then(|batch| agent.train_step(&batch, occupancies.as_deref()));
                if let Err(e) = trained {
                    diagnostic = Some(Diagnostic {
                        seed,
                        global_step: steps_done,
                        message: e.to_string(),
                    });
                    break;
                }
            }

            obs = out.observation;
            if out.done {
                episode += 1;
                train.push(TrainRecord {
                    seed,
                    global_step: steps_done,
                    episode_index: episode,
                    episode_return,
                    gravity_at_episode_start: episode_gravity,
                });
                if episode.is_multiple_of(config.eval_every_episodes) {
                    for &g in &config.eval_gravities {
                        let episode_return = evaluate_policy(&agent, config, g, &mut eval_rng)?;
                        eval.push(EvalRecord {
                            seed,
                            global_step: steps_done,
                            gravity: g,
                            episode_return,
                        });
                    }
                }
                if steps_done < config.total_steps {
                    obs = env.reset(schedule.as_ref(), steps_done, &mut env_rng)?;
                    episode_gravity = env.g;
                    episode_return = 0.0;
                }
            }
        }
    }
    if let Some(d) = &diagnostic {
        log::error!(
            "seed {} aborted at step {}: {}",
            d.seed,
            d.global_step,
            d.message
        );
    }

    let mut cascade_ages = Vec::new();
    buffer.for_each_stored(&mut |e, source| {
        if source != NO_SUB_BUFFER {
            cascade_ages.push(steps_done - e.insert_step);
        }
    });
    cascade_ages.sort_unstable();

    Ok(SeedOutcome {
        seed,
        train,
        eval,
        cascade_ages,
        diagnostic,
        agent,
        buffer,
        steps_done,
    })
}

fn write_csv<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = T>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_config_echo(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    let path = dir.join(CONFIG_ECHO);
    let text = serde_json::to_string_pretty(&ConfigEcho {
        build_id: BUILD_ID,
        config,
    })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Runs every seed of `config` (in parallel) and writes the logs into the
/// resolved output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let out_dir = config.resolved_out_dir();
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_config_echo(&out_dir, config)?;

    let outcomes: Vec<Result<SeedOutcome>> = config
        .seeds
        .par_iter()
        .map(|&s| run_seed(config, s))
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    write_csv(
        &out_dir.join(TRAIN_LOG),
        &[
            "seed",
            "global_step",
            "episode_index",
            "episode_return",
            "gravity_at_episode_start",
        ],
        outcomes.iter().flat_map(|o| o.train.iter()),
    )?;
    write_csv(
        &out_dir.join(EVAL_LOG),
        &["seed", "global_step", "gravity", "episode_return"],
        outcomes.iter().flat_map(|o| o.eval.iter()),
    )?;

    let diagnostics: Vec<Diagnostic> = outcomes
        .iter()
        .filter_map(|o| o.diagnostic.clone())
        .collect();
    let diag_path = out_dir.join(DIAGNOSTICS);
    if diagnostics.is_empty() {
        if diag_path.exists() {
            fs::remove_file(&diag_path).map_err(|e| Error::io(&diag_path, e))?;
        }
    } else {
        write_csv(
            &diag_path,
            &["seed", "global_step", "message"],
            diagnostics.iter(),
        )?;
    }

    if config.agent_kind()?.buffer == "mtr" {
        let ages: Vec<u64> = outcomes
            .iter()
            .flat_map(|o| o.cascade_ages.iter().copied())
            .collect();
        let bins: Vec<AgeBin> = age_histogram(&ages, AGE_HIST_BINS);
        write_age_hist_csv(&out_dir.join(AGE_HIST), &bins)?;
    }

    if config.save_checkpoints {
        for o in &outcomes {
            let dir = out_dir.join(CHECKPOINTS).join(format!("seed_{}", o.seed));
            o.agent.save_checkpoint(&dir, o.seed, o.steps_done)?;
            let path = dir.join("buffer.bin");
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = std::io::BufWriter::new(file);
            o.buffer.to_snapshot().write_to(&mut w)?;
            std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
        }
    }

    Ok(RunSummary {
        out_dir,
        train_rows: outcomes.iter().map(|o| o.train.len()).sum(),
        eval_rows: outcomes.iter().map(|o| o.eval.len()).sum(),
        diagnostics,
    })
}

/// Reads an `eval_log.csv`.
pub fn read_eval_log(path: &Path) -> Result<Vec<EvalRecord>> {
    read_csv(path)
}

/// Reads a `train_log.csv`.
pub fn read_train_log(path: &Path) -> Result<Vec<TrainRecord>> {
    read_csv(path)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Reads back the config echoed by [`run_experiment`].
pub fn read_config_echo(dir: &Path) -> Result<(String, ExperimentConfig)> {
    let path = dir.join(CONFIG_ECHO);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    let build = value
        .as_object_mut()
        .and_then(|o| o.remove("build_id"))
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    Ok((build, serde_json::from_value(value)?))
}
