//! Multi-seed runs and their on-disk artifacts.
//!
//! Output directory layout:
//!
//! - `trace_seedNNN.csv`: one checkpoint per row, columns
//!   `samples_used, outer_k, inner_t, q_inf_error, q_l2_sq_error,
//!   d_norm_sq_error, loss, v_gap` (`v_gap` empty where not evaluated)
//! - `summary.csv`: seed-averaged final errors
//! - `outer.csv`: seed-averaged errors per outer iteration (periodic runs)
//! - `run_meta.json`: replica seeds, oracle tolerance, warnings
//! - `timing.json`: wall time, kept apart so the files above are
//!   reproducible byte for byte

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::info;
use periodic_q::bellman::{Oracle, ORACLE_TOL};
use periodic_q::metrics::MeanSe;
use periodic_q::pq::{run_pq, RunTrace};
use periodic_q::seed::derive_seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{HarnessError, Result};

/// Errors below this are at the resolution of the oracle.
pub const ORACLE_LIMITED_BELOW: f64 = 1e-8;

pub const TRACE_HEADER: [&str; 8] = [
    "samples_used",
    "outer_k",
    "inner_t",
    "q_inf_error",
    "q_l2_sq_error",
    "d_norm_sq_error",
    "loss",
    "v_gap",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "config_hash",
    "num_seeds",
    "samples_used",
    "q_inf_error_mean",
    "q_inf_error_se",
    "v_gap_mean",
    "v_gap_se",
];

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub index: usize,
    pub seed: u64,
    pub trace: RunTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config_hash: String,
    pub num_seeds: usize,
    pub samples_used: u64,
    pub q_inf_error: MeanSe,
    pub v_gap: MeanSe,
    pub wall_time: Duration,
}

/// Seed averages for the table `Q_k` entering outer iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterAggregate {
    pub outer_k: usize,
    pub samples_used: u64,
    /// `‖Q_k - Q*‖_∞`.
    pub q_inf_error: MeanSe,
    /// `‖Q_{k+1} - T Q_k‖₂²`; absent after the last iteration.
    pub next_inner_residual: Option<MeanSe>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub oracle: Oracle,
    pub runs: Vec<SeedRun>,
    pub summary: SummaryRow,
    pub outer: Vec<OuterAggregate>,
}

impl ExperimentResult {
    pub fn oracle_limited(&self) -> bool {
        self.runs.iter().any(|r| {
            r.trace
                .last()
                .q_inf_error
                .is_some_and(|e| e < ORACLE_LIMITED_BELOW)
        })
    }
}

/// Runs every replica, in parallel when `threads` allows, and aggregates.
/// Results do not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    let started = Instant::now();
    let oracle = Oracle::solve(&cfg.mdp, ORACLE_TOL)?;
    info!(
        "oracle: {} sweeps, ‖Q*‖∞ = {:.6}",
        oracle.iterations,
        oracle.q_star.inf_norm()
    );

    let run_one = |index: usize| -> Result<SeedRun> {
        let seed = derive_seed(cfg.base_seed, index as u64);
        let pq = cfg.algorithm.for_seed(seed);
        let trace = run_pq(&cfg.mdp, &cfg.distribution, &pq, Some(&oracle))?;
        Ok(SeedRun { index, seed, trace })
    };
    let runs: Vec<SeedRun> = match threads {
        Some(1) => (0..cfg.num_seeds).map(run_one).collect::<Result<_>>()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| (0..cfg.num_seeds).into_par_iter().map(run_one).collect::<Result<_>>())?,
        None => (0..cfg.num_seeds).into_par_iter().map(run_one).collect::<Result<_>>()?,
    };

    let config_hash = cfg.config_hash();
    let finals: Vec<f64> = runs
        .iter()
        .map(|r| r.trace.last().q_inf_error.expect("oracle supplied"))
        .collect();
    let gaps: Vec<f64> = runs
        .iter()
        .map(|r| r.trace.last().v_gap.expect("final checkpoint carries the gap"))
        .collect();
    let outer = match cfg.algorithm.kind() {
        Algorithm::Pq => outer_aggregates(&runs),
        Algorithm::Standard => Vec::new(),
    };
    let summary = SummaryRow {
        config_hash: config_hash.clone(),
        num_seeds: runs.len(),
        samples_used: runs[0].trace.samples_used(),
        q_inf_error: MeanSe::of(&finals),
        v_gap: MeanSe::of(&gaps),
        wall_time: started.elapsed(),
    };
    Ok(ExperimentResult {
        config_hash,
        oracle,
        runs,
        summary,
        outer,
    })
}

fn outer_aggregates(runs: &[SeedRun]) -> Vec<OuterAggregate> {
    let num_outer = runs[0].trace.outer.len();
    let column = |f: &dyn Fn(&RunTrace) -> f64| MeanSe::of(&runs.iter().map(|r| f(&r.trace)).collect::<Vec<_>>());
    (0..=num_outer)
        .map(|k| {
            let (samples_used, q_inf_error) = if k == 0 {
                (0, column(&|t| t.checkpoints[0].q_inf_error.expect("oracle supplied")))
            } else {
                (
                    runs[0].trace.outer[k - 1].samples_used,
                    column(&|t| t.outer[k - 1].q_inf_error.expect("oracle supplied")),
                )
            };
            let next_inner_residual = (k < num_outer).then(|| column(&|t| t.outer[k].inner_residual));
            OuterAggregate {
                outer_k: k,
                samples_used,
                q_inf_error,
                next_inner_residual,
            }
        })
        .collect()
}

/// Seed mean and standard error of `q_inf_error` at each checkpoint.
/// Every replica shares the same checkpoint positions.
pub fn checkpoint_means(runs: &[SeedRun]) -> Vec<(u64, MeanSe)> {
    let rows = runs[0].trace.checkpoints.len();
    (0..rows)
        .map(|i| {
            let xs: Vec<f64> = runs
                .iter()
                .map(|r| r.trace.checkpoints[i].q_inf_error.expect("oracle supplied"))
                .collect();
            (runs[0].trace.checkpoints[i].samples_used, MeanSe::of(&xs))
        })
        .collect()
}

pub fn trace_file_name(index: usize) -> String {
    format!("trace_seed{index:03}.csv")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for c in &trace.checkpoints {
        w.write_record([
            c.samples_used.to_string(),
            c.outer_k.to_string(),
            c.inner_t.to_string(),
            opt(c.q_inf_error),
            opt(c.q_l2_sq_error),
            opt(c.d_norm_sq_error),
            c.loss.to_string(),
            opt(c.v_gap),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[&SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for s in rows {
        w.write_record([
            s.config_hash.clone(),
            s.num_seeds.to_string(),
            s.samples_used.to_string(),
            s.q_inf_error.mean.to_string(),
            s.q_inf_error.se.to_string(),
            s.v_gap.mean.to_string(),
            s.v_gap.se.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn write_outer(path: &Path, outer: &[OuterAggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "outer_k",
        "samples_used",
        "q_inf_error_mean",
        "q_inf_error_se",
        "inner_residual_mean",
        "inner_residual_se",
    ])?;
    for o in outer {
        w.write_record([
            o.outer_k.to_string(),
            o.samples_used.to_string(),
            o.q_inf_error.mean.to_string(),
            o.q_inf_error.se.to_string(),
            opt(o.next_inner_residual.map(|m| m.mean)),
            opt(o.next_inner_residual.map(|m| m.se)),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct SeedEntry {
    index: usize,
    seed: u64,
    trace: String,
}

#[derive(Serialize)]
struct OracleMeta {
    tolerance: f64,
    sweeps: usize,
    q_star_inf_norm: f64,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    config_hash: &'a str,
    algorithm: Algorithm,
    base_seed: u64,
    num_seeds: usize,
    samples_per_seed: u64,
    seeds: Vec<SeedEntry>,
    oracle: OracleMeta,
    oracle_limited_below: f64,
    oracle_limited: bool,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct Timing {
    wall_time_secs: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Writes all artifacts of `result` into `dir`. Returns the written paths.
pub fn write_outputs(result: &ExperimentResult, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    for run in &result.runs {
        let path = dir.join(trace_file_name(run.index));
        write_trace(&path, &run.trace)?;
        written.push(path);
    }
    let path = dir.join("summary.csv");
    write_summary(&path, &[&result.summary])?;
    written.push(path);
    if !result.outer.is_empty() {
        let path = dir.join("outer.csv");
        write_outer(&path, &result.outer)?;
        written.push(path);
    }
    let meta = RunMeta {
        config_hash: &result.config_hash,
        algorithm: cfg.algorithm.kind(),
        base_seed: cfg.base_seed,
        num_seeds: cfg.num_seeds,
        samples_per_seed: cfg.algorithm.total_samples(),
        seeds: result
            .runs
            .iter()
            .map(|r| SeedEntry {
                index: r.index,
                seed: r.seed,
                trace: trace_file_name(r.index),
            })
            .collect(),
        oracle: OracleMeta {
            tolerance: result.oracle.tolerance,
            sweeps: result.oracle.iterations,
            q_star_inf_norm: result.oracle.q_star.inf_norm(),
        },
        oracle_limited_below: ORACLE_LIMITED_BELOW,
        oracle_limited: result.oracle_limited(),
        warnings: &cfg.warnings,
    };
    let path = dir.join("run_meta.json");
    write_json(&path, &meta)?;
    written.push(path);
    let path = dir.join("timing.json");
    write_json(
        &path,
        &Timing {
            wall_time_secs: result.summary.wall_time.as_secs_f64(),
        },
    )?;
    written.push(path);
    Ok(written)
}
