//! Experiment configuration.
//!
//! A config is a JSON object. Minimal example:
//!
//! ```json
//! {
//!   "generator": { "S": 5, "A": 3, "gamma": 0.9, "seed": 1 },
//!   "algorithm": "pq",
//!   "T": 20,
//!   "N": 1000,
//!   "seeds": 10
//! }
//! ```
//!
//! Recognized keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `generator` | `{S, A, gamma, seed, branching}` for a random instance | |
//! | `mdp_file` | path to an MDP document (exclusive with `generator`) | |
//! | `distribution` | `"uniform"`, `{"file": path}` or `"from_mdp_file"` | `"uniform"` |
//! | `algorithm` | `"pq"` or `"standard"` | `"pq"` |
//! | `T` | outer iterations | from `epsilon` |
//! | `N` | inner steps, integer or per-iteration array | from `epsilon` |
//! | `steps` | total samples for `standard` | `T * N` |
//! | `epsilon` | target accuracy, used for defaults and annotations | |
//! | `schedule` | `{beta, lambda}` | theory schedule of the distribution |
//! | `step_indexing` | `"per_iteration"` or `"global"` | per algorithm |
//! | `init` | `"zeros"`, `"optimal"`, `{"constant": x}`, `{"table": [[..]]}`, `{"uniform": {"seed": n}}` | `"zeros"` |
//! | `seed` | base seed for replicas | `0` |
//! | `seeds` | number of replicas | `1` |
//! | `eval_every` | checkpoint cadence in samples | `N` (pq), `steps / 100` (standard) |
//! | `v_gap_every` | policy-gap cadence in samples | final checkpoint only |
//! | `output` | output directory | CLI / environment |
//!
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use log::warn;
use periodic_q::bellman::{Oracle, ORACLE_TOL};
use periodic_q::mdp::{load_mdp, make_distribution, random_mdp, SamplingDistribution, TabularMdp};
use periodic_q::pq::{
    required_inner_steps, required_outer_iters, theory_schedule, BoundInputs, InitQ, InnerSteps,
    PqConfig, StandardQConfig, StepIndexing, StepSchedule,
};
use periodic_q::QTable;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::uniform_table;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(rename = "S", alias = "states")]
    pub num_states: usize,
    #[serde(rename = "A", alias = "actions")]
    pub num_actions: usize,
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Support size of each transition row; defaults to `S`.
    #[serde(default)]
    pub branching: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSpec {
    #[default]
    Uniform,
    /// The `distribution` field of the MDP file.
    FromMdpFile,
    /// A JSON file holding `[[d(s, a)]]`.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Pq,
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformInit {
    pub seed: u64,
    /// Half-width of the interval; defaults to `1/(1-γ)`.
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Zeros,
    Constant(f64),
    Table(Vec<Vec<f64>>),
    /// One table drawn once and shared by every replica.
    Uniform(UniformInit),
    /// The optimal table `Q*` of the instance.
    Optimal,
}

/// The raw document, before defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    generator: Option<GeneratorSpec>,
    mdp_file: Option<PathBuf>,
    #[serde(default)]
    distribution: DistributionSpec,
    #[serde(default)]
    algorithm: Algorithm,
    #[serde(rename = "T", alias = "outer_iters")]
    outer_iters: Option<usize>,
    #[serde(rename = "N", alias = "inner_steps")]
    inner_steps: Option<InnerSteps>,
    steps: Option<u64>,
    epsilon: Option<f64>,
    schedule: Option<StepSchedule>,
    step_indexing: Option<StepIndexing>,
    #[serde(default)]
    init: InitSpec,
    #[serde(default)]
    seed: u64,
    seeds: Option<usize>,
    eval_every: Option<u64>,
    v_gap_every: Option<u64>,
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpSource {
    Generator(GeneratorSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmConfig {
    Pq(PqConfig),
    Standard(StandardQConfig),
}

impl AlgorithmConfig {
    pub fn kind(&self) -> Algorithm {
        match self {
            AlgorithmConfig::Pq(_) => Algorithm::Pq,
            AlgorithmConfig::Standard(_) => Algorithm::Standard,
        }
    }

    pub fn total_samples(&self) -> u64 {
        match self {
            AlgorithmConfig::Pq(c) => c.total_samples(),
            AlgorithmConfig::Standard(c) => c.total_steps,
        }
    }

    pub fn eval_every(&self) -> u64 {
        match self {
            AlgorithmConfig::Pq(c) => c.eval_every,
            AlgorithmConfig::Standard(c) => c.eval_every,
        }
    }

    /// The periodic configuration actually executed for replica `seed`.
    pub fn for_seed(&self, seed: u64) -> PqConfig {
        let mut cfg = match self {
            AlgorithmConfig::Pq(c) => c.clone(),
            AlgorithmConfig::Standard(c) => c.to_pq_config(),
        };
        cfg.seed = seed;
        cfg
    }
}

/// A fully resolved, validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: MdpSource,
    pub mdp: TabularMdp,
    pub distribution: SamplingDistribution,
    pub algorithm: AlgorithmConfig,
    pub epsilon: Option<f64>,
    pub base_seed: u64,
    pub num_seeds: usize,
    pub output: Option<PathBuf>,
    /// Notes raised while applying defaults; also sent to the logger.
    pub warnings: Vec<String>,
}

/// The content that determines results; hashed into the config id.
#[derive(Serialize)]
struct HashedContent<'a> {
    mdp: periodic_q::mdp::MdpDocument,
    algorithm: &'a AlgorithmConfig,
    epsilon: Option<f64>,
    base_seed: u64,
    num_seeds: usize,
}

impl ExperimentConfig {
    /// Hex SHA-256 of the instance, distribution, algorithm settings and seeds.
    /// Paths and the output location do not enter the hash.
    pub fn config_hash(&self) -> String {
        let content = HashedContent {
            mdp: self.mdp.to_document(Some(&self.distribution)),
            algorithm: &self.algorithm,
            epsilon: self.epsilon,
            base_seed: self.base_seed,
            num_seeds: self.num_seeds,
        };
        let bytes = serde_json::to_vec(&content).expect("config content serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn with_num_seeds(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(HarnessError::field("seeds", "must be at least 1"));
        }
        self.num_seeds = n;
        Ok(self)
    }

    pub fn bound_inputs(&self) -> Option<BoundInputs> {
        self.epsilon
            .map(|eps| BoundInputs::with_distribution(eps, self.mdp.gamma(), &self.distribution))
    }
}

/// Parses a config with relative paths resolved against the working directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_in(text, Path::new("."))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_in(&text, base)
}

pub fn parse_config_in(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let raw: RawConfig = serde_json::from_str(text)?;
    resolve(raw, base_dir)
}

fn resolve(raw: RawConfig, base_dir: &Path) -> Result<ExperimentConfig> {
    let mut warnings = Vec::new();
    let mut note = |msg: String| {
        warn!("{msg}");
        warnings.push(msg);
    };

    let (source, mdp, file_dist) = match (raw.generator, raw.mdp_file) {
        (Some(_), Some(_)) => {
            return Err(HarnessError::field("generator", "give either `generator` or `mdp_file`, not both"))
        }
        (None, None) => return Err(HarnessError::field("generator", "missing MDP source (`generator` or `mdp_file`)")),
        (Some(g), None) => {
            let branching = g.branching.unwrap_or(g.num_states);
            let mdp = random_mdp(g.seed, g.num_states, g.num_actions, g.gamma, branching)
                .map_err(|e| HarnessError::field("generator", e.to_string()))?;
            (MdpSource::Generator(g), mdp, None)
        }
        (None, Some(p)) => {
            let path = base_dir.join(p);
            let (mdp, dist) = load_mdp(&path).map_err(|e| HarnessError::field("mdp_file", e.to_string()))?;
            (MdpSource::File(path), mdp, dist)
        }
    };
    let (ns, na, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());

    let distribution = match raw.distribution {
        DistributionSpec::Uniform => SamplingDistribution::uniform(ns, na)?,
        DistributionSpec::FromMdpFile => file_dist.ok_or_else(|| {
            HarnessError::field("distribution", "the MDP source carries no `distribution`")
        })?,
        DistributionSpec::File(p) => {
            let path = base_dir.join(p);
            let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&text)?;
            let d = make_distribution(&rows).map_err(|e| HarnessError::field("distribution", e.to_string()))?;
            if (d.num_states(), d.num_actions()) != (ns, na) {
                return Err(HarnessError::field(
                    "distribution",
                    format!("shape {}x{} does not match the {ns}x{na} MDP", d.num_states(), d.num_actions()),
                ));
            }
            d
        }
    };

    if let Some(eps) = raw.epsilon {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(HarnessError::field("epsilon", format!("must be positive, got {eps}")));
        }
        let regime = (1.0 - gamma) * (1.0 - gamma);
        if eps > regime {
            note(format!(
                "epsilon = {eps} exceeds (1-gamma)^2 = {regime}; the sample-complexity bounds assume the smaller range"
            ));
        }
    }
    let bounds = raw
        .epsilon
        .map(|eps| BoundInputs::with_distribution(eps, gamma, &distribution));

    let schedule = match raw.schedule {
        Some(s) => {
            s.validate().map_err(|e| HarnessError::field("schedule", e.to_string()))?;
            if !s.is_theory_compliant(&distribution) {
                note(format!(
                    "schedule has initial step {} above the admissible c/(8L) = {}",
                    s.initial_step(),
                    distribution.c_min() / (8.0 * distribution.l_max())
                ));
            }
            s
        }
        None => theory_schedule(&distribution),
    };

    let init = build_init(&raw.init, &mdp)?;

    let num_seeds = raw.seeds.unwrap_or(1);
    if num_seeds == 0 {
        return Err(HarnessError::field("seeds", "must be at least 1"));
    }
    if raw.eval_every == Some(0) {
        return Err(HarnessError::field("eval_every", "must be positive"));
    }
    if raw.v_gap_every == Some(0) {
        return Err(HarnessError::field("v_gap_every", "must be positive"));
    }

    let algorithm = match raw.algorithm {
        Algorithm::Pq => {
            if raw.steps.is_some() {
                return Err(HarnessError::field("steps", "only used with algorithm `standard`; set `T` and `N`"));
            }
            let outer_iters = match (raw.outer_iters, bounds) {
                (Some(t), _) => t,
                (None, Some(b)) => {
                    let t = required_outer_iters(b.epsilon, gamma)
                        .map_err(|e| HarnessError::field("epsilon", e.to_string()))?
                        .max(1) as usize;
                    note(format!("T omitted; using the outer-iteration bound T = {t}"));
                    t
                }
                (None, None) => return Err(HarnessError::field("T", "missing (give `T` or `epsilon`)")),
            };
            let inner_steps = match (raw.inner_steps, bounds) {
                (Some(n), _) => n,
                (None, Some(b)) => {
                    let n = required_inner_steps(&b).map_err(|e| HarnessError::field("epsilon", e.to_string()))?;
                    note(format!(
                        "N omitted; using the inner-step bound N = {n} per outer iteration ({:e} samples in total)",
                        n as f64 * outer_iters as f64
                    ));
                    InnerSteps::Constant(n)
                }
                (None, None) => return Err(HarnessError::field("N", "missing (give `N` or `epsilon`)")),
            };
            let first = inner_steps.get(0).max(1);
            let cfg = PqConfig {
                outer_iters,
                eval_every: raw.eval_every.unwrap_or(first),
                inner_steps,
                schedule,
                step_indexing: raw.step_indexing.unwrap_or_default(),
                init,
                seed: raw.seed,
                policy_gap_every: raw.v_gap_every,
                track_outer: true,
            };
            cfg.validate(&mdp).map_err(|e| HarnessError::field("T", e.to_string()))?;
            AlgorithmConfig::Pq(cfg)
        }
        Algorithm::Standard => {
            if raw.step_indexing == Some(StepIndexing::PerIteration) {
                return Err(HarnessError::field(
                    "step_indexing",
                    "standard Q-learning advances the step index globally",
                ));
            }
            let total_steps = match (raw.steps, raw.outer_iters, &raw.inner_steps) {
                (Some(m), _, _) => m,
                (None, Some(t), Some(n)) => n.total(t),
                _ => return Err(HarnessError::field("steps", "missing (give `steps`, or `T` and `N`)")),
            };
            let cfg = StandardQConfig {
                total_steps,
                schedule,
                init,
                seed: raw.seed,
                eval_every: raw.eval_every.unwrap_or((total_steps / 100).max(1)),
                policy_gap_every: raw.v_gap_every,
            };
            cfg.to_pq_config()
                .validate(&mdp)
                .map_err(|e| HarnessError::field("steps", e.to_string()))?;
            AlgorithmConfig::Standard(cfg)
        }
    };

    Ok(ExperimentConfig {
        source,
        mdp,
        distribution,
        algorithm,
        epsilon: raw.epsilon,
        base_seed: raw.seed,
        num_seeds,
        output: raw.output.map(|p| base_dir.join(p)),
        warnings,
    })
}

fn build_init(spec: &InitSpec, mdp: &TabularMdp) -> Result<InitQ> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let bound = 1.0 / (1.0 - mdp.gamma());
    let init = match spec {
        InitSpec::Zeros => InitQ::Zeros,
        InitSpec::Constant(v) => InitQ::Constant(*v),
        InitSpec::Table(rows) => {
            let t = QTable::from_rows(rows).map_err(|e| HarnessError::field("init", e.to_string()))?;
            if t.shape() != (ns, na) {
                return Err(HarnessError::field(
                    "init",
                    format!("table is {}x{}, MDP is {ns}x{na}", t.num_states(), t.num_actions()),
                ));
            }
            InitQ::Table(t)
        }
        InitSpec::Uniform(u) => {
            let scale = u.scale.unwrap_or(bound);
            if !(scale.is_finite() && (0.0..=bound).contains(&scale)) {
                return Err(HarnessError::field("init", format!("scale must lie in [0, {bound}], got {scale}")));
            }
            InitQ::Table(uniform_table(ns, na, scale, u.seed))
        }
        InitSpec::Optimal => InitQ::Table(Oracle::solve(mdp, ORACLE_TOL)?.q_star),
    };
    let q0 = init.build(ns, na)?;
    if !q0.is_finite() || q0.inf_norm() > bound {
        return Err(HarnessError::field(
            "init",
            format!("entries must lie in [-{bound}, {bound}], got |Q_0| = {}", q0.inf_norm()),
        ));
    }
    Ok(init)
}
