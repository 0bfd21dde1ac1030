use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{
    read_config_echo, read_eval_log, read_train_log, EvalRecord, TrainRecord, EVAL_LOG, TRAIN_LOG,
};
use super::svg::{self, Line, Panel};
use crate::retention::mean_and_se;
use crate::{Error, Result};

/// Moving-average window, in logged points.
pub const MA_WINDOW: usize = 20;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const TRAIN_EVAL_SVG: &str = "train_eval.svg";
pub const EVAL_BY_GRAVITY_SVG: &str = "eval_by_gravity.svg";

pub const SERIES_TRAIN: &str = "train";
pub const SERIES_EVAL_MEAN: &str = "eval_mean";

/// Name of the per-gravity evaluation series.
pub fn gravity_series(g: f64) -> String {
    format!("eval_g{g}")
}

/// Trailing moving average; the first `window − 1` points average over
/// what is available.
pub fn trailing_moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub agent: String,
    pub series: String,
    pub global_step: u64,
    pub mean: f64,
    pub se: f64,
    pub n_seeds: usize,
}

/// Per-step mean and standard error over seeds. Each input series is
/// `(global_step, value)` for one seed.
pub fn across_seeds(per_seed: &[Vec<(u64, f64)>]) -> Vec<(u64, f64, f64, usize)> {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for series in per_seed {
        for &(step, v) in series {
            by_step.entry(step).or_default().push(v);
        }
    }
    by_step
        .into_iter()
        .map(|(step, vs)| {
            let (m, se) = mean_and_se(&vs);
            (step, m, se, vs.len())
        })
        .collect()
}

fn smoothed(mut points: Vec<(u64, f64)>) -> Vec<(u64, f64)> {
    points.sort_by_key(|p| p.0);
    let vals: Vec<f64> = points.iter().map(|p| p.1).collect();
    let ma = trailing_moving_average(&vals, MA_WINDOW);
    points.iter().zip(ma).map(|(p, m)| (p.0, m)).collect()
}

/// Mean evaluation return over gravities, per evaluation event.
pub fn eval_means(rows: &[EvalRecord]) -> Vec<(u64, f64)> {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_step
            .entry(r.global_step)
            .or_default()
            .push(r.episode_return);
    }
    by_step
        .into_iter()
        .map(|(s, v)| (s, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

/// Logs of one agent kind gathered from one or more run directories.
#[derive(Debug, Clone, Default)]
pub struct AgentLogs {
    pub train: BTreeMap<u64, Vec<TrainRecord>>,
    pub eval: BTreeMap<u64, Vec<EvalRecord>>,
}

/// Every agent's logs plus the shared configuration.
#[derive(Debug, Clone)]
pub struct Collected {
    pub config: ExperimentConfig,
    pub agents: BTreeMap<String, AgentLogs>,
}

fn comparable(c: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        buffer: String::new(),
        seeds: Vec::new(),
        lambda_irm: 0.0,
        out_dir: None,
        save_checkpoints: false,
        ..c.clone()
    }
}

/// Loads run directories, refusing configurations that differ in anything
/// but the buffer kind, seeds, invariance weight or output location.
pub fn collect(run_dirs: &[PathBuf]) -> Result<Collected> {
    if run_dirs.is_empty() {
        return Err(Error::Config(
            "aggregate needs at least one run directory".into(),
        ));
    }
    let mut reference: Option<(PathBuf, ExperimentConfig)> = None;
    let mut agents: BTreeMap<String, AgentLogs> = BTreeMap::new();
    for dir in run_dirs {
        let (_, config) = read_config_echo(dir)?;
        match &reference {
            None => reference = Some((dir.clone(), config.clone())),
            Some((ref_dir, ref_cfg)) => {
                if comparable(ref_cfg) != comparable(&config) {
                    return Err(Error::Incompatible(format!(
                        "{} and {} were run with different settings",
                        ref_dir.display(),
                        dir.display()
                    )));
                }
            }
        }
        let logs = agents.entry(config.buffer.clone()).or_default();
        let train = read_train_log(&dir.join(TRAIN_LOG))?;
        let eval = read_eval_log(&dir.join(EVAL_LOG))?;
        let mut seeds_here: Vec<u64> = train
            .iter()
            .map(|r| r.seed)
            .chain(eval.iter().map(|r| r.seed))
            .collect();
        seeds_here.sort_unstable();
        seeds_here.dedup();
        for s in &seeds_here {
            if logs.train.contains_key(s) || logs.eval.contains_key(s) {
                return Err(Error::Incompatible(format!(
                    "seed {s} of agent {} appears in more than one run directory",
                    config.buffer
                )));
            }
        }
        for r in train {
            logs.train.entry(r.seed).or_default().push(r);
        }
        for r in eval {
            logs.eval.entry(r.seed).or_default().push(r);
        }
    }
    let (_, config) = reference.expect("at least one run dir");
    Ok(Collected { config, agents })
}

/// Smoothed across-seed series for every agent: training return, mean
/// evaluation return and one evaluation series per gravity.
pub fn summarize(collected: &Collected) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (agent, logs) in &collected.agents {
        let mut push = |series: String, per_seed: Vec<Vec<(u64, f64)>>| {
            for (global_step, mean, se, n_seeds) in across_seeds(&per_seed) {
                rows.push(SummaryRow {
                    agent: agent.clone(),
                    series: series.clone(),
                    global_step,
                    mean,
                    se,
                    n_seeds,
                });
            }
        };
        let train = logs
            .train
            .values()
            .map(|rs| {
                smoothed(
                    rs.iter()
                        .map(|r| (r.global_step, r.episode_return))
                        .collect(),
                )
            })
            .collect();
        push(SERIES_TRAIN.to_string(), train);
        let eval_mean = logs
            .eval
            .values()
            .map(|rs| smoothed(eval_means(rs)))
            .collect();
        push(SERIES_EVAL_MEAN.to_string(), eval_mean);
        for &g in &collected.config.eval_gravities {
            let per_seed = logs
                .eval
                .values()
                .map(|rs| {
                    smoothed(
                        rs.iter()
                            .filter(|r| r.gravity == g)
                            .map(|r| (r.global_step, r.episode_return))
                            .collect(),
                    )
                })
                .collect();
            push(gravity_series(g), per_seed);
        }
    }
    rows
}

fn panel(rows: &[SummaryRow], series: &str, title: String, y_label: &str) -> Panel {
    let mut lines: BTreeMap<&str, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.series == series) {
        lines
            .entry(&r.agent)
            .or_default()
            .push((r.global_step as f64, r.mean, r.se));
    }
    Panel {
        title,
        x_label: "environment step".into(),
        y_label: y_label.into(),
        lines: lines
            .into_iter()
            .map(|(label, points)| Line {
                label: label.to_string(),
                points,
            })
            .collect(),
    }
}

/// Output of [`aggregate`].
#[derive(Debug, Clone)]
pub struct AggregateOutput {
    pub rows: Vec<SummaryRow>,
    pub summary_csv: PathBuf,
    pub charts: Vec<PathBuf>,
}

/// Writes `summary.csv` plus the training/mean-evaluation chart and the
/// per-gravity evaluation chart into `out_dir`.
pub fn aggregate(run_dirs: &[PathBuf], out_dir: &Path) -> Result<AggregateOutput> {
    let collected = collect(run_dirs)?;
    let rows = summarize(&collected);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let summary_csv = out_dir.join(SUMMARY_CSV);
    let file = fs::File::create(&summary_csv).map_err(|e| Error::io(&summary_csv, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["agent", "series", "global_step", "mean", "se", "n_seeds"])?;
    }
    w.flush().map_err(|e| Error::io(&summary_csv, e))?;

    let task = &collected.config.schedule;
    let train_eval = svg::render(
        &[
            panel(
                &rows,
                SERIES_TRAIN,
                format!("Training return ({task})"),
                "episode return",
            ),
            panel(
                &rows,
                SERIES_EVAL_MEAN,
                format!("Mean evaluation return ({task})"),
                "episode return",
            ),
        ],
        2,
    );
    let by_gravity: Vec<Panel> = collected
        .config
        .eval_gravities
        .iter()
        .map(|&g| {
            panel(
                &rows,
                &gravity_series(g),
                format!("Evaluation at g = {g}"),
                "episode return",
            )
        })
        .collect();
    let by_gravity = svg::render(&by_gravity, 3);

    let mut charts = Vec::new();
    for (name, body) in [
        (TRAIN_EVAL_SVG, train_eval),
        (EVAL_BY_GRAVITY_SVG, by_gravity),
    ] {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        charts.push(path);
    }
    Ok(AggregateOutput {
        rows,
        summary_csv,
        charts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_of_constant_is_constant() {
        assert_eq!(
            trailing_moving_average(&[3.0; 50], MA_WINDOW),
            vec![3.0; 50]
        );
    }

    #[test]
    fn moving_average_of_step_is_twenty_point_ramp() {
        let k = 40;
        let xs: Vec<f64> = (0..100).map(|i| if i < k { 0.0 } else { 1.0 }).collect();
        let ma = trailing_moving_average(&xs, 20);
        for (i, &m) in ma.iter().enumerate() {
            let expect = if i < k {
                0.0
            } else {
                ((i - k + 1).min(20)) as f64 / 20.0
            };
            assert!((m - expect).abs() < 1e-12, "i={i}: {m} vs {expect}");
        }
    }

    #[test]
    fn across_seed_statistics() {
        let single = across_seeds(&[vec![(10, 4.0), (20, 4.0)]]);
        assert_eq!(single, vec![(10, 4.0, 0.0, 1), (20, 4.0, 0.0, 1)]);
        let three = across_seeds(&[vec![(5, 1.0)], vec![(5, 2.0)], vec![(5, 3.0)]]);
        assert_eq!(three[0].1, 2.0);
        assert!((three[0].2 - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn eval_means_are_per_event() {
        let r = |s, g, v| EvalRecord {
            seed: 1,
            global_step: s,
            gravity: g,
            episode_return: v,
        };
        let rows = vec![
            r(100, -7.0, 1.0),
            r(100, -17.0, 3.0),
            r(200, -7.0, 5.0),
            r(200, -17.0, 7.0),
        ];
        assert_eq!(eval_means(&rows), vec![(100, 2.0), (200, 6.0)]);
    }
}
