use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mtr_core::harness::{self, ExperimentConfig};
use mtr_core::retention::{self, RetentionParams, RetentionReport};
use mtr_core::verify;

#[derive(Parser)]
#[command(name = "mtr", version = mtr_core::BUILD_ID, about = "Multi-timescale replay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate agents, writing CSV logs and checkpoints.
    Run(Box<RunArgs>),
    /// Smooth and average run logs into summary.csv and SVG charts.
    Aggregate(AggregateArgs),
    /// Compare cascade fill counts and survival against the closed forms.
    Retention(RetentionArgs),
    /// Run the gradient and property self-checks.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with configuration keys; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["fifo", "reservoir", "half", "mtr", "mtr_irm"])]
    buffer: Option<String>,
    #[arg(long, value_parser = ["fixed", "linear", "sine", "random"])]
    schedule: Option<String>,
    /// Total environment steps per seed.
    #[arg(long)]
    steps: Option<u64>,
    /// Seed to run; repeat for several.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    #[arg(long)]
    n_b: Option<usize>,
    #[arg(long)]
    beta_mtr: Option<f64>,
    #[arg(long)]
    lambda_irm: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_frequency: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    eval_every_episodes: Option<u64>,
    #[arg(long)]
    episodes_per_eval: Option<u32>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Skip writing agent and buffer checkpoints.
    #[arg(long)]
    no_checkpoints: bool,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RetentionArgs {
    /// Total buffer capacity.
    #[arg(long = "N", default_value_t = 2000)]
    capacity: usize,
    /// Number of cascade sub-buffers.
    #[arg(long = "nb", default_value_t = 10)]
    n_sub: usize,
    #[arg(long, default_value_t = 0.85)]
    beta: f64,
    /// Number of independent seeds.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Pushes per seed for the survival study.
    #[arg(long, default_value_t = 200_000)]
    pushes: u64,
    /// Also write survival.csv and age_hist.csv here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

macro_rules! override_fields {
    ($cfg:expr, $args:expr, $($field:ident),+) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })+
    };
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => ExperimentConfig::default(),
    };
    override_fields!(
        config,
        args,
        buffer,
        schedule,
        buffer_capacity,
        n_b,
        beta_mtr,
        lambda_irm,
        batch_size,
        train_frequency,
        warmup,
        eval_every_episodes,
        episodes_per_eval,
        hidden_width,
        hidden_layers,
        learning_rate,
        gamma,
        tau
    );
    if let Some(steps) = args.steps {
        config.total_steps = steps;
    }
    if !args.seeds.is_empty() {
        config.seeds = args.seeds.clone();
    }
    if args.out_dir.is_some() {
        config.out_dir = args.out_dir.clone();
    }
    if args.no_checkpoints {
        config.save_checkpoints = false;
    }
    log::info!(
        "running {} on {} for {} steps, seeds {:?}",
        config.buffer,
        config.schedule,
        config.total_steps,
        config.seeds
    );
    let summary = harness::run_experiment(&config)?;
    println!(
        "{}: {} training episodes, {} evaluation rows",
        summary.out_dir.display(),
        summary.train_rows,
        summary.eval_rows
    );
    for d in &summary.diagnostics {
        eprintln!(
            "seed {} stopped at step {}: {}",
            d.seed, d.global_step, d.message
        );
    }
    if summary.diagnostics.len() == config.seeds.len() {
        bail!("every seed aborted");
    }
    Ok(())
}

fn aggregate(args: AggregateArgs) -> Result<()> {
    let out = harness::aggregate(&args.runs, &args.out_dir)?;
    println!(
        "wrote {} summary rows to {}",
        out.rows.len(),
        out.summary_csv.display()
    );
    for c in out.charts {
        println!("wrote {}", c.display());
    }
    Ok(())
}

fn retention_cmd(args: RetentionArgs) -> Result<()> {
    if args.seeds == 0 {
        bail!("--seeds must be positive");
    }
    let p = RetentionParams::new(args.capacity, args.n_sub, args.beta)?;
    let seeds: Vec<u64> = (1..=args.seeds).collect();
    let report = RetentionReport::run(&p, &seeds, args.pushes)?;
    report.print(&mut std::io::stdout().lock())?;
    if let Some(dir) = args.out_dir {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        retention::write_survival_csv(&dir.join("survival.csv"), &report.survival)?;
        retention::write_age_hist_csv(&dir.join("age_hist.csv"), &report.age_hist)?;
    }
    Ok(())
}

fn verify_cmd() -> Result<()> {
    let checks = verify::run_all();
    let mut out = std::io::stdout().lock();
    for c in &checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        writeln!(
            out,
            "{mark} {}{}",
            c.name,
            if c.detail.is_empty() {
                String::new()
            } else {
                format!(" ({})", c.detail)
            }
        )?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    writeln!(out, "all {} checks passed", checks.len())?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(*a),
        Command::Aggregate(a) => aggregate(a),
        Command::Retention(a) => retention_cmd(a),
        Command::Verify => verify_cmd(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
