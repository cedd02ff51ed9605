//! Periodic Q-learning.
//!
//! The outer loop freezes a target table `Q_k`; the inner loop runs `N_k`
//! SGD steps on `l(Q; Q_k)` starting from `Q_{k,0} = Q_k`, each consuming one
//! transition sample:
//!
//! ```text
//! Q_{k,t+1}(s,a) = Q_{k,t}(s,a) + β_t (r(s,a) + γ max_{a'} Q_k(s',a') - Q_{k,t}(s,a))
//! ```
//!
//! and then synchronizes `Q_{k+1} = Q_{k,N_k}`. With `N_k = 1` and a global
//! step index this is standard Q-learning.

pub mod bounds;

use serde::{Deserialize, Serialize};

use crate::bellman::{backup, Oracle};
use crate::error::{Error, Result};
use crate::mdp::{SamplingDistribution, TabularMdp};
use crate::metrics::{norms, policy_gap, sq_distance};
use crate::sampler::TransitionSampler;
use crate::seed::{stream_rng, STREAM_SAMPLING};
use crate::sgd::{loss_against, SparseGradient, TransitionSample};
use crate::table::{Policy, QTable};
use crate::bellman::greedy_policy;

pub use bounds::{
    inner_steps_bound, outer_iters_bound, required_inner_steps, required_outer_iters,
    sample_complexity_policy, sample_complexity_q, theory_schedule, BoundInputs, StepSchedule,
};

/// Inner-loop lengths `{N_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InnerSteps {
    Constant(u64),
    PerIteration(Vec<u64>),
}

impl InnerSteps {
    pub fn get(&self, k: usize) -> u64 {
        match self {
            InnerSteps::Constant(n) => *n,
            InnerSteps::PerIteration(v) => v[k],
        }
    }

    pub fn total(&self, outer_iters: usize) -> u64 {
        match self {
            InnerSteps::Constant(n) => n * outer_iters as u64,
            InnerSteps::PerIteration(v) => v.iter().sum(),
        }
    }
}

/// Which counter `t` feeds `β_t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepIndexing {
    /// `t` restarts at zero in every outer iteration.
    #[default]
    PerIteration,
    /// `t` counts all samples consumed so far.
    Global,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitQ {
    #[default]
    Zeros,
    Constant(f64),
    Table(QTable),
}

impl InitQ {
    pub fn build(&self, num_states: usize, num_actions: usize) -> Result<QTable> {
        match self {
            InitQ::Zeros => Ok(QTable::zeros(num_states, num_actions)),
            InitQ::Constant(v) => Ok(QTable::constant(num_states, num_actions, *v)),
            InitQ::Table(t) => {
                if t.shape() != (num_states, num_actions) {
                    return Err(Error::shape(
                        format!("{num_states}x{num_actions} initial table"),
                        format!("{}x{}", t.num_states(), t.num_actions()),
                    ));
                }
                Ok(t.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqConfig {
    /// `T`.
    pub outer_iters: usize,
    pub inner_steps: InnerSteps,
    pub schedule: StepSchedule,
    #[serde(default)]
    pub step_indexing: StepIndexing,
    #[serde(default)]
    pub init: InitQ,
    #[serde(default)]
    pub seed: u64,
    /// Checkpoint cadence in samples.
    pub eval_every: u64,
    /// Cadence, in samples, of the policy-gap column; the final checkpoint
    /// always carries it when an oracle is supplied.
    #[serde(default)]
    pub policy_gap_every: Option<u64>,
    /// Record `‖Q_{k+1} - T Q_k‖₂²` after every outer iteration. Costs one
    /// Bellman backup per outer iteration.
    #[serde(default = "default_true")]
    pub track_outer: bool,
}

fn default_true() -> bool {
    true
}

impl PqConfig {
    /// `T` outer iterations of `N` steps each; per-iteration step index, zero
    /// initialization, seed 0, one checkpoint per outer iteration.
    pub fn new(outer_iters: usize, inner_steps: u64, schedule: StepSchedule) -> Self {
        Self {
            outer_iters,
            inner_steps: InnerSteps::Constant(inner_steps),
            schedule,
            step_indexing: StepIndexing::PerIteration,
            init: InitQ::Zeros,
            seed: 0,
            eval_every: inner_steps.max(1),
            policy_gap_every: None,
            track_outer: true,
        }
    }

    pub fn total_samples(&self) -> u64 {
        self.inner_steps.total(self.outer_iters)
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(Error::Config("outer_iters must be positive".into()));
        }
        match &self.inner_steps {
            InnerSteps::Constant(0) => {
                return Err(Error::Config("inner_steps must be positive".into()))
            }
            InnerSteps::PerIteration(v) => {
                if v.len() != self.outer_iters {
                    return Err(Error::Config(format!(
                        "inner_steps has {} entries for {} outer iterations",
                        v.len(),
                        self.outer_iters
                    )));
                }
                if let Some(k) = v.iter().position(|&n| n == 0) {
                    return Err(Error::Config(format!("inner_steps[{k}] must be positive")));
                }
            }
            InnerSteps::Constant(_) => {}
        }
        self.schedule.validate()?;
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if self.policy_gap_every == Some(0) {
            return Err(Error::Config("policy_gap_every must be positive".into()));
        }
        let q0 = self.init.build(mdp.num_states(), mdp.num_actions())?;
        let bound = 1.0 / (1.0 - mdp.gamma());
        if !q0.is_finite() || q0.inf_norm() > bound {
            return Err(Error::Config(format!(
                "initial table has |Q_0| = {} outside [-1/(1-γ), 1/(1-γ)] = ±{bound}",
                q0.inf_norm()
            )));
        }
        Ok(())
    }
}

/// One trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub samples_used: u64,
    pub outer_k: usize,
    /// Inner step counter; `N_k` marks the end of outer iteration `k`.
    pub inner_t: u64,
    pub q_inf_error: Option<f64>,
    pub q_l2_sq_error: Option<f64>,
    pub d_norm_sq_error: Option<f64>,
    /// `l(Q_{k,t}; Q_k) = ½ ‖T Q_k - Q_{k,t}‖_D²`.
    pub loss: f64,
    pub v_gap: Option<f64>,
}

/// Summary of the table `Q_{k+1}` produced by outer iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer_k: usize,
    pub samples_used: u64,
    /// `‖Q_{k+1} - T Q_k‖₂²`.
    pub inner_residual: f64,
    /// `‖Q_{k+1} - Q*‖_∞`.
    pub q_inf_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub outer: Vec<OuterRecord>,
    pub final_q: QTable,
    pub final_policy: Policy,
}

impl RunTrace {
    pub fn samples_used(&self) -> u64 {
        self.checkpoints.last().map_or(0, |c| c.samples_used)
    }

    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("a trace always has the initial checkpoint")
    }
}

/// Mutable state of the frozen target: `V_k(s) = max_a Q_k(s, a)` plus the
/// states touched since the last synchronization.
struct Target {
    values: Vec<f64>,
    dirty: Vec<bool>,
    touched: Vec<usize>,
    backup: Option<QTable>,
}

impl Target {
    fn new(q: &QTable) -> Self {
        Self {
            values: q.state_values(),
            dirty: vec![false; q.num_states()],
            touched: Vec::new(),
            backup: None,
        }
    }

    #[inline]
    fn touch(&mut self, state: usize) {
        if !self.dirty[state] {
            self.dirty[state] = true;
            self.touched.push(state);
        }
    }

    fn sync(&mut self, q: &QTable) {
        for &s in &self.touched {
            self.values[s] = q.row_max(s);
            self.dirty[s] = false;
        }
        self.touched.clear();
        self.backup = None;
    }

    /// `T Q_k`, computed once per outer iteration on demand.
    fn backup(&mut self, mdp: &TabularMdp) -> &QTable {
        self.backup.get_or_insert_with(|| backup(mdp, &self.values))
    }
}

/// Gradient of the sampled loss at `(s, a)` given the frozen next-state values.
#[inline]
pub(crate) fn td_gradient(sample: &TransitionSample, q: &QTable, target_values: &[f64], gamma: f64) -> SparseGradient {
    SparseGradient {
        state: sample.state,
        action: sample.action,
        value: -(sample.reward + gamma * target_values[sample.next_state]
            - q.get(sample.state, sample.action)),
    }
}

struct Recorder<'a> {
    mdp: &'a TabularMdp,
    d: &'a SamplingDistribution,
    oracle: Option<&'a Oracle>,
    gap_every: Option<u64>,
    checkpoints: Vec<Checkpoint>,
}

impl Recorder<'_> {
    fn record(
        &mut self,
        q: &QTable,
        target: &mut Target,
        samples_used: u64,
        outer_k: usize,
        inner_t: u64,
        is_final: bool,
    ) -> Result<()> {
        let loss = loss_against(q, target.backup(self.mdp), self.d);
        let (mut inf, mut l2, mut dn, mut gap) = (None, None, None, None);
        if let Some(oracle) = self.oracle {
            let n = norms(q, &oracle.q_star, self.d)?;
            inf = Some(n.inf);
            l2 = Some(n.l2_sq);
            dn = Some(n.d_sq);
            let due = self.gap_every.is_some_and(|every| samples_used.is_multiple_of(every));
            if is_final || due {
                gap = Some(policy_gap(self.mdp, q, &oracle.q_star)?);
            }
        }
        self.checkpoints.push(Checkpoint {
            samples_used,
            outer_k,
            inner_t,
            q_inf_error: inf,
            q_l2_sq_error: l2,
            d_norm_sq_error: dn,
            loss,
            v_gap: gap,
        });
        Ok(())
    }
}

/// Runs periodic Q-learning and returns its trace.
///
/// Checkpoints are taken before the first sample, after every sample count
/// divisible by `eval_every`, and after the last sample. Errors against `Q*`
/// are filled in when `oracle` is given. Equal inputs give identical traces.
pub fn run_pq(
    mdp: &TabularMdp,
    d: &SamplingDistribution,
    cfg: &PqConfig,
    oracle: Option<&Oracle>,
) -> Result<RunTrace> {
    cfg.validate(mdp)?;
    if let Some(o) = oracle {
        o.q_star.check_shape(&QTable::zeros(mdp.num_states(), mdp.num_actions()))?;
    }
    let sampler = TransitionSampler::new(mdp, d)?;
    let mut rng = stream_rng(cfg.seed, STREAM_SAMPLING);
    let gamma = mdp.gamma();
    let total = cfg.total_samples();

    let mut q = cfg.init.build(mdp.num_states(), mdp.num_actions())?;
    let mut target = Target::new(&q);
    let mut recorder = Recorder {
        mdp,
        d,
        oracle,
        gap_every: cfg.policy_gap_every,
        checkpoints: Vec::new(),
    };
    let mut outer = Vec::with_capacity(if cfg.track_outer { cfg.outer_iters } else { 0 });
    recorder.record(&q, &mut target, 0, 0, 0, total == 0)?;

    let mut samples_used: u64 = 0;
    for k in 0..cfg.outer_iters {
        let n_k = cfg.inner_steps.get(k);
        for t in 0..n_k {
            let step_index = match cfg.step_indexing {
                StepIndexing::PerIteration => t,
                StepIndexing::Global => samples_used,
            };
            let beta = cfg.schedule.step(step_index);
            let sample = sampler.sample(&mut rng);
            let g = td_gradient(&sample, &q, &target.values, gamma);
            let cell = &mut q.values_mut()[g.state * mdp.num_actions() + g.action];
            *cell -= beta * g.value;
            target.touch(g.state);
            samples_used += 1;

            let is_final = samples_used == total;
            if samples_used.is_multiple_of(cfg.eval_every) || is_final {
                recorder.record(&q, &mut target, samples_used, k, t + 1, is_final)?;
            }
        }
        if cfg.track_outer {
            let residual = sq_distance(&q, target.backup(mdp));
            let q_inf_error = oracle.map(|o| q.sub(&o.q_star).map(|e| e.inf_norm())).transpose()?;
            outer.push(OuterRecord {
                outer_k: k,
                samples_used,
                inner_residual: residual,
                q_inf_error,
            });
        }
        target.sync(&q);
    }

    let final_policy = greedy_policy(&q);
    Ok(RunTrace {
        seed: cfg.seed,
        checkpoints: recorder.checkpoints,
        outer,
        final_q: q,
        final_policy,
    })
}

/// Standard Q-learning: one sample per synchronization, step index advancing
/// globally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardQConfig {
    pub total_steps: u64,
    pub schedule: StepSchedule,
    #[serde(default)]
    pub init: InitQ,
    #[serde(default)]
    pub seed: u64,
    pub eval_every: u64,
    #[serde(default)]
    pub policy_gap_every: Option<u64>,
}

impl StandardQConfig {
    /// The equivalent periodic configuration: `T = M`, `N_k = 1`, global index.
    pub fn to_pq_config(&self) -> PqConfig {
        PqConfig {
            outer_iters: self.total_steps as usize,
            inner_steps: InnerSteps::Constant(1),
            schedule: self.schedule,
            step_indexing: StepIndexing::Global,
            init: self.init.clone(),
            seed: self.seed,
            eval_every: self.eval_every,
            policy_gap_every: self.policy_gap_every,
            track_outer: false,
        }
    }
}

pub fn run_standard_q(
    mdp: &TabularMdp,
    d: &SamplingDistribution,
    cfg: &StandardQConfig,
    oracle: Option<&Oracle>,
) -> Result<RunTrace> {
    run_pq(mdp, d, &cfg.to_pq_config(), oracle)
}
