//! Periodic vs standard Q-learning at a matched sample budget.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use periodic_q::metrics::MeanSe;
use periodic_q::pq::{sample_complexity_policy, sample_complexity_q};

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::{checkpoint_means, run_experiment, write_outputs, write_summary, ExperimentResult};

pub const COMPARISON_HEADER: [&str; 7] = [
    "samples_used",
    "pq_q_inf_error_mean",
    "pq_q_inf_error_se",
    "standard_q_inf_error_mean",
    "standard_q_inf_error_se",
    "sample_complexity_q",
    "sample_complexity_policy",
];

/// Bound values attached to every comparison row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotations {
    pub epsilon: Option<f64>,
    pub sample_complexity_q: Option<f64>,
    /// Defined only for `epsilon ≤ 1`.
    pub sample_complexity_policy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub samples_used: u64,
    pub pq: Option<MeanSe>,
    pub standard: Option<MeanSe>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub budget: u64,
    pub pq: ExperimentResult,
    pub standard: ExperimentResult,
    pub rows: Vec<ComparisonRow>,
    pub annotations: Annotations,
}

/// Rejects the pair unless both target the same instance and distribution
/// and both consume exactly `budget` samples per replica.
pub fn check_matched(pq: &ExperimentConfig, standard: &ExperimentConfig, budget: u64) -> Result<()> {
    if pq.algorithm.kind() != Algorithm::Pq {
        return Err(HarnessError::Compare("the first config must use algorithm `pq`".into()));
    }
    if standard.algorithm.kind() != Algorithm::Standard {
        return Err(HarnessError::Compare("the baseline config must use algorithm `standard`".into()));
    }
    if pq.mdp != standard.mdp {
        return Err(HarnessError::Compare("the two configs describe different MDPs".into()));
    }
    if pq.distribution != standard.distribution {
        return Err(HarnessError::Compare("the two configs use different sampling distributions".into()));
    }
    for (name, cfg) in [("pq", pq), ("standard", standard)] {
        let used = cfg.algorithm.total_samples();
        if used != budget {
            return Err(HarnessError::Compare(format!(
                "{name} config uses {used} samples, budget is {budget}"
            )));
        }
    }
    Ok(())
}

pub fn annotations(cfg: &ExperimentConfig) -> Result<Annotations> {
    let Some(inputs) = cfg.bound_inputs() else {
        return Ok(Annotations {
            epsilon: None,
            sample_complexity_q: None,
            sample_complexity_policy: None,
        });
    };
    let policy = if inputs.epsilon <= 1.0 {
        Some(sample_complexity_policy(&inputs)?)
    } else {
        None
    };
    Ok(Annotations {
        epsilon: Some(inputs.epsilon),
        sample_complexity_q: Some(sample_complexity_q(&inputs)?),
        sample_complexity_policy: policy,
    })
}

pub fn compare(
    pq_cfg: &ExperimentConfig,
    standard_cfg: &ExperimentConfig,
    budget: u64,
    threads: Option<usize>,
) -> Result<Comparison> {
    check_matched(pq_cfg, standard_cfg, budget)?;
    let annotations = annotations(if pq_cfg.epsilon.is_some() { pq_cfg } else { standard_cfg })?;
    let pq = run_experiment(pq_cfg, threads)?;
    let standard = run_experiment(standard_cfg, threads)?;

    let mut aligned: BTreeMap<u64, ComparisonRow> = BTreeMap::new();
    for (samples, m) in checkpoint_means(&pq.runs) {
        aligned
            .entry(samples)
            .or_insert(ComparisonRow { samples_used: samples, pq: None, standard: None })
            .pq = Some(m);
    }
    for (samples, m) in checkpoint_means(&standard.runs) {
        aligned
            .entry(samples)
            .or_insert(ComparisonRow { samples_used: samples, pq: None, standard: None })
            .standard = Some(m);
    }
    Ok(Comparison {
        budget,
        pq,
        standard,
        rows: aligned.into_values().collect(),
        annotations,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `comparison.csv`, `compare_summary.csv` and each side's full
/// artifacts under `pq/` and `standard/`.
pub fn write_comparison(
    cmp: &Comparison,
    pq_cfg: &ExperimentConfig,
    standard_cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = write_outputs(&cmp.pq, pq_cfg, &dir.join("pq"))?;
    written.extend(write_outputs(&cmp.standard, standard_cfg, &dir.join("standard"))?);

    let path = dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(COMPARISON_HEADER)?;
    for r in &cmp.rows {
        w.write_record([
            r.samples_used.to_string(),
            opt(r.pq.map(|m| m.mean)),
            opt(r.pq.map(|m| m.se)),
            opt(r.standard.map(|m| m.mean)),
            opt(r.standard.map(|m| m.se)),
            opt(cmp.annotations.sample_complexity_q),
            opt(cmp.annotations.sample_complexity_policy),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);

    let path = dir.join("compare_summary.csv");
    write_summary(&path, &[&cmp.pq.summary, &cmp.standard.summary])?;
    written.push(path);
    Ok(written)
}
