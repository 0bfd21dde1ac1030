//! Retention math for the cascade buffer.
//!
//! With the cascade full, an item reaches sub-buffer `k + 1` with probability
//! `β^k`, and in expectation it takes `(N / n_b) · β^-(i-1)` pushes to cross
//! sub-buffer `i`. Summing gives the expected age `t̂ₖ` at the end of
//! sub-buffer `k`, and treating that age as exact gives a survival curve
//! `P(lifetime > t) = 1 / (t · (n_b / N) · (1 - β) / β + 1)`, i.e. roughly
//! `1 / t`. The simulation half of this module measures the same quantities
//! on a live [`MtrBuffer`].

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::replay::MtrBuffer;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RetentionParams {
    pub capacity: usize,
    pub n_sub: usize,
    pub beta: f64,
}

impl RetentionParams {
    pub fn new(capacity: usize, n_sub: usize, beta: f64) -> Result<Self> {
        if n_sub == 0 || capacity < n_sub || !capacity.is_multiple_of(n_sub) {
            return Err(Error::Config(format!(
                "capacity {capacity} must be a positive multiple of n_b = {n_sub}"
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Config(format!(
                "beta must lie in [0, 1], got {beta}"
            )));
        }
        Ok(Self {
            capacity,
            n_sub,
            beta,
        })
    }

    fn sub_size(&self) -> f64 {
        self.capacity as f64 / self.n_sub as f64
    }
}

/// Expected age of an item at the end of sub-buffer `k` (1-based).
///
/// `β = 1` uses the limit `k · N / n_b`; `β = 0` gives infinity for `k > 1`.
pub fn t_hat(p: &RetentionParams, k: usize) -> Result<f64> {
    if k == 0 || k > p.n_sub {
        return Err(Error::OutOfRange {
            what: "sub-buffer index",
            detail: format!("k = {k}, n_b = {}", p.n_sub),
        });
    }
    let b = p.beta;
    Ok(if b == 1.0 {
        k as f64 * p.sub_size()
    } else if b == 0.0 {
        if k == 1 {
            p.sub_size()
        } else {
            f64::INFINITY
        }
    } else {
        p.sub_size() * (b / (1.0 - b)) * (b.powi(-(k as i32)) - 1.0)
    })
}

/// Closed-form probability that an item outlives `t` pushes.
pub fn survival_probability(p: &RetentionParams, t: f64) -> f64 {
    let b = p.beta;
    if t <= 0.0 {
        return 1.0;
    }
    if b == 0.0 {
        return 0.0;
    }
    1.0 / (t * (p.n_sub as f64 / p.capacity as f64) * ((1.0 - b) / b) + 1.0)
}

/// Expected number of pushes before the cascade is full.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FillCount {
    Finite(f64),
    /// `β = 0`: nothing is ever promoted past the first sub-buffer.
    Never,
}

impl FillCount {
    pub fn value(self) -> f64 {
        match self {
            FillCount::Finite(v) => v,
            FillCount::Never => f64::INFINITY,
        }
    }
}

pub fn expected_fill_count(p: &RetentionParams) -> FillCount {
    if p.beta == 0.0 {
        if p.n_sub == 1 {
            return FillCount::Finite(p.capacity as f64);
        }
        return FillCount::Never;
    }
    let mut total = 0.0;
    let mut scale = 1.0;
    for _ in 0..p.n_sub {
        total += p.sub_size() * scale;
        scale /= p.beta;
    }
    FillCount::Finite(total)
}

/// Number of pushes at which one simulated cascade first becomes full, or
/// `None` if that did not happen within `max_pushes`.
pub fn simulate_fill_count(p: &RetentionParams, seed: u64, max_pushes: u64) -> Result<Option<u64>> {
    let mut buf = MtrBuffer::new(p.capacity, p.n_sub, p.beta, seed)?;
    for t in 1..=max_pushes {
        buf.push(());
        if buf.is_cascade_full() {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Lifetimes recorded while streaming items through one buffer.
#[derive(Debug, Clone)]
pub struct LifetimeTrace {
    pub push_count: u64,
    /// Indexed by insertion step; `None` for items still stored at the end.
    pub lifetimes: Vec<Option<u64>>,
    /// Ages of items left in the cascade (not the overflow) at the end.
    pub cascade_ages: Vec<u64>,
}

impl LifetimeTrace {
    pub fn record(p: &RetentionParams, push_count: u64, seed: u64) -> Result<Self> {
        let mut buf: MtrBuffer<u64> = MtrBuffer::new(p.capacity, p.n_sub, p.beta, seed)?;
        let mut lifetimes = vec![None; push_count as usize];
        for t in 0..push_count {
            buf.push_observed(t, |item| lifetimes[item as usize] = Some(t - item));
        }
        let now = push_count.saturating_sub(1);
        let cascade_ages = (1..=p.n_sub)
            .flat_map(|k| buf.sub_buffer(k).map(move |&i| now - i).collect::<Vec<_>>())
            .collect();
        Ok(Self {
            push_count,
            lifetimes,
            cascade_ages,
        })
    }

    /// Fraction of items that outlived `t` pushes, over the items whose fate
    /// at age `t` is observable (inserted at least `t + 1` pushes before the
    /// end). Returns `None` when no item qualifies.
    pub fn survival(&self, t: f64) -> Option<f64> {
        let now = self.push_count.checked_sub(1)? as f64;
        let eligible = (now - t).ceil().max(0.0) as usize;
        let eligible = eligible.min(self.lifetimes.len());
        if eligible == 0 {
            return None;
        }
        let survived = self.lifetimes[..eligible]
            .iter()
            .filter(|l| match l {
                Some(life) => *life as f64 > t,
                None => true,
            })
            .count();
        Some(survived as f64 / eligible as f64)
    }
}

/// Empirical survival at each anchor for one seeded run of `push_count`
/// synthetic pushes.
pub fn empirical_survival(
    push_count: u64,
    p: &RetentionParams,
    seed: u64,
    anchors: &[f64],
) -> Result<Vec<f64>> {
    let trace = LifetimeTrace::record(p, push_count, seed)?;
    anchors
        .iter()
        .map(|&a| {
            trace.survival(a).ok_or_else(|| Error::OutOfRange {
                what: "survival anchor",
                detail: format!("anchor {a} leaves no observable items in {push_count} pushes"),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub anchor_t: f64,
    pub analytic: f64,
    pub empirical_mean: f64,
    pub empirical_se: f64,
    pub n_seeds: usize,
}

/// Survival at `anchors` across `seeds` independent runs, run in parallel.
pub fn survival_study(
    p: &RetentionParams,
    push_count: u64,
    seeds: &[u64],
    anchors: &[f64],
) -> Result<Vec<SurvivalRow>> {
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&s| empirical_survival(push_count, p, s, anchors))
        .collect::<Result<_>>()?;
    Ok(anchors
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let values: Vec<f64> = per_seed.iter().map(|v| v[j]).collect();
            let (mean, se) = mean_and_se(&values);
            SurvivalRow {
                anchor_t: a,
                analytic: survival_probability(p, a),
                empirical_mean: mean,
                empirical_se: se,
                n_seeds: values.len(),
            }
        })
        .collect())
}

/// Sample mean and standard error (n − 1 denominator; zero for n < 2).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Least-squares slope of `ln(survival)` against `ln(t)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, s)| *t > 0.0 && *s > 0.0)
        .map(|(t, s)| (t.ln(), s.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgeBin {
    pub age_bin_lo: f64,
    pub age_bin_hi: f64,
    pub count: u64,
}

/// Histogram of ages over `bins` uniform bins spanning the observed range.
pub fn age_histogram(ages: &[u64], bins: usize) -> Vec<AgeBin> {
    let (Some(&lo), Some(&hi)) = (ages.iter().min(), ages.iter().max()) else {
        return Vec::new();
    };
    let bins = bins.max(1);
    let lo = lo as f64;
    let hi = hi as f64 + 1.0;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &a in ages {
        let idx = (((a as f64 - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| AgeBin {
            age_bin_lo: lo + i as f64 * width,
            age_bin_hi: lo + (i + 1) as f64 * width,
            count,
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
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

pub fn write_survival_csv(path: &Path, rows: &[SurvivalRow]) -> Result<()> {
    write_rows(
        path,
        rows,
        &[
            "anchor_t",
            "analytic",
            "empirical_mean",
            "empirical_se",
            "n_seeds",
        ],
    )
}

pub fn write_age_hist_csv(path: &Path, bins: &[AgeBin]) -> Result<()> {
    write_rows(path, bins, &["age_bin_lo", "age_bin_hi", "count"])
}

/// Report of a standalone retention study, as printed by the CLI.
#[derive(Debug, Clone)]
pub struct RetentionReport {
    pub params: RetentionParams,
    pub analytic_fill: FillCount,
    pub empirical_fill_mean: f64,
    pub empirical_fill_se: f64,
    pub fill_runs_completed: usize,
    pub survival: Vec<SurvivalRow>,
    pub tail_slope: Option<f64>,
    pub age_hist: Vec<AgeBin>,
}

impl RetentionReport {
    pub fn run(p: &RetentionParams, seeds: &[u64], push_count: u64) -> Result<Self> {
        let analytic_fill = expected_fill_count(p);
        let cap = match analytic_fill {
            FillCount::Finite(v) => (v * 10.0).ceil() as u64,
            FillCount::Never => push_count,
        };
        let fills: Vec<Option<u64>> = seeds
            .par_iter()
            .map(|&s| simulate_fill_count(p, s, cap))
            .collect::<Result<_>>()?;
        let done: Vec<f64> = fills.iter().flatten().map(|&v| v as f64).collect();
        let (fill_mean, fill_se) = mean_and_se(&done);

        let anchors: Vec<f64> = (1..=p.n_sub)
            .filter_map(|k| t_hat(p, k).ok())
            .filter(|&t| t.is_finite() && t < push_count as f64 - 1.0)
            .collect();
        let survival = survival_study(p, push_count, seeds, &anchors)?;
        let tail: Vec<(f64, f64)> = survival
            .iter()
            .skip(1)
            .map(|r| (r.anchor_t, r.empirical_mean))
            .collect();
        let trace = LifetimeTrace::record(p, push_count, seeds.first().copied().unwrap_or(0))?;
        Ok(Self {
            params: *p,
            analytic_fill,
            empirical_fill_mean: fill_mean,
            empirical_fill_se: fill_se,
            fill_runs_completed: done.len(),
            survival,
            tail_slope: log_log_slope(&tail),
            age_hist: age_histogram(&trace.cascade_ages, 100),
        })
    }

    pub fn print<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let p = &self.params;
        writeln!(
            w,
            "N = {}, n_b = {}, beta = {}",
            p.capacity, p.n_sub, p.beta
        )?;
        writeln!(
            w,
            "fill count: analytic {:.1}, empirical {:.1} ± {:.1} ({} runs)",
            self.analytic_fill.value(),
            self.empirical_fill_mean,
            self.empirical_fill_se,
            self.fill_runs_completed
        )?;
        writeln!(
            w,
            "{:>12} {:>10} {:>10} {:>10}",
            "t", "analytic", "empirical", "se"
        )?;
        for r in &self.survival {
            writeln!(
                w,
                "{:>12.1} {:>10.5} {:>10.5} {:>10.5}",
                r.anchor_t, r.analytic, r.empirical_mean, r.empirical_se
            )?;
        }
        match self.tail_slope {
            Some(s) => writeln!(w, "log-log tail slope: {s:.3}"),
            None => writeln!(w, "log-log tail slope: n/a"),
        }
    }
}
