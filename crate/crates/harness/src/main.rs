use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use periodic_q::mdp::load_mdp;
use periodic_q::pq::{
    inner_steps_bound, outer_iters_bound, required_inner_steps, required_outer_iters, sample_complexity_policy,
    sample_complexity_q, BoundInputs,
};
use pq_harness::compare::{compare, write_comparison};
use pq_harness::{load_config, run_experiment, write_outputs, ExperimentConfig};

/// Environment variable naming the default output directory.
const OUT_DIR_VAR: &str = "PQ_OUT_DIR";
const DEFAULT_OUT: &str = "pq_out";

#[derive(Parser)]
#[command(name = "pqlearn", version, about = "Periodic Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOpts {
    /// Output directory; falls back to the config's `output`, then PQ_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Periodic vs standard Q-learning at the same sample budget.
    Compare {
        /// Periodic Q-learning config.
        #[arg(long)]
        config: PathBuf,
        /// Standard Q-learning config.
        #[arg(long)]
        baseline: PathBuf,
        /// Samples per replica both configs must consume.
        #[arg(long)]
        budget: u64,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print the inner-step, outer-iteration and sample-complexity bounds.
    Bounds {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        /// Smallest pair probability (default: uniform).
        #[arg(long)]
        c: Option<f64>,
        /// Largest pair probability (default: uniform).
        #[arg(long)]
        l: Option<f64>,
    },
    /// Check an MDP file.
    Validate { file: PathBuf },
}

fn resolve(path: &Path, seeds: Option<usize>) -> Result<ExperimentConfig> {
    let cfg = load_config(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(match seeds {
        Some(n) => cfg.with_num_seeds(n)?,
        None => cfg,
    })
}

fn out_dir(opts: &RunOpts, cfg: &ExperimentConfig) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn print_summary(label: &str, res: &pq_harness::ExperimentResult) {
    let s = &res.summary;
    println!(
        "{label}: seeds={} samples={} q_inf_error={:.6e}±{:.2e} v_gap={:.6e}±{:.2e} wall={:.2}s",
        s.num_seeds,
        s.samples_used,
        s.q_inf_error.mean,
        s.q_inf_error.se,
        s.v_gap.mean,
        s.v_gap.se,
        s.wall_time.as_secs_f64()
    );
    if res.oracle_limited() {
        println!("{label}: some final errors are below 1e-8 and limited by the oracle tolerance");
    }
}

fn bounds(epsilon: f64, gamma: f64, states: usize, actions: usize, c: Option<f64>, l: Option<f64>) -> Result<()> {
    let uniform = 1.0 / (states * actions) as f64;
    let inputs = BoundInputs::new(epsilon, gamma, states, actions, c.unwrap_or(uniform), l.unwrap_or(uniform));
    inputs.validate()?;
    println!("epsilon={epsilon}");
    println!("gamma={gamma}");
    println!("num_pairs={}", states * actions);
    println!("c={}", inputs.c);
    println!("l={}", inputs.l);
    println!("inner_steps_bound={}", inner_steps_bound(&inputs)?);
    match required_inner_steps(&inputs) {
        Ok(n) => println!("required_inner_steps={n}"),
        Err(e) => println!("required_inner_steps=overflow ({e})"),
    }
    println!("outer_iters_bound={}", outer_iters_bound(epsilon, gamma)?);
    println!("required_outer_iters={}", required_outer_iters(epsilon, gamma)?);
    println!("sample_complexity_q={}", sample_complexity_q(&inputs)?);
    if epsilon <= 1.0 {
        println!("sample_complexity_policy={}", sample_complexity_policy(&inputs)?);
    } else {
        println!("sample_complexity_policy=undefined (epsilon > 1)");
    }
    println!("schedule_beta={}", 2.0 / inputs.c);
    println!("schedule_lambda={}", 16.0 * inputs.l / (inputs.c * inputs.c));
    if epsilon > (1.0 - gamma).powi(2) {
        eprintln!("warning: epsilon exceeds (1-gamma)^2; the bounds assume the smaller range");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, opts } => {
            let cfg = resolve(&config, opts.seeds)?;
            let res = run_experiment(&cfg, opts.threads)?;
            let dir = out_dir(&opts, &cfg);
            write_outputs(&res, &cfg, &dir).with_context(|| format!("writing {}", dir.display()))?;
            print_summary("run", &res);
            println!("wrote {}", dir.display());
        }
        Command::Compare {
            config,
            baseline,
            budget,
            opts,
        } => {
            let pq = resolve(&config, opts.seeds)?;
            let standard = resolve(&baseline, opts.seeds)?;
            let cmp = compare(&pq, &standard, budget, opts.threads)?;
            let dir = out_dir(&opts, &pq);
            write_comparison(&cmp, &pq, &standard, &dir).with_context(|| format!("writing {}", dir.display()))?;
            print_summary("pq", &cmp.pq);
            print_summary("standard", &cmp.standard);
            println!("wrote {}", dir.join("comparison.csv").display());
        }
        Command::Bounds {
            epsilon,
            gamma,
            states,
            actions,
            c,
            l,
        } => bounds(epsilon, gamma, states, actions, c, l)?,
        Command::Validate { file } => match load_mdp(&file) {
            Ok((mdp, dist)) => {
                println!(
                    "ok: {} states, {} actions, gamma={}{}",
                    mdp.num_states(),
                    mdp.num_actions(),
                    mdp.gamma(),
                    if dist.is_some() { ", with sampling distribution" } else { "" }
                );
            }
            Err(e) => bail!("{}: {e}", file.display()),
        },
    }
    Ok(())
}
