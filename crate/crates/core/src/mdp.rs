//! Tabular discounted MDPs, the state-action sampling distribution, a seeded
//! random instance generator, and the JSON document format used on disk.

use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::seed::{stream_rng, STREAM_GENERATOR};

/// Row sums of the transition kernel must be within this of one.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance accepted on the total mass of a user-supplied distribution
/// before it is renormalized.
pub const DISTRIBUTION_INPUT_TOL: f64 = 1e-9;

/// First violated invariant found by [`validate_mdp`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpViolation {
    #[error("empty model: {num_states} states, {num_actions} actions")]
    Empty { num_states: usize, num_actions: usize },
    #[error("transition P_{action}({state},{next_state}) = {value} is negative or not finite")]
    BadProbability {
        action: usize,
        state: usize,
        next_state: usize,
        value: f64,
    },
    #[error("row sum of P_{action}({state},.) is {sum}, expected 1 within {tol}")]
    RowSum {
        action: usize,
        state: usize,
        sum: f64,
        tol: f64,
    },
    #[error("reward r({state},{action}) = {value} outside reward bound [-1, 1]")]
    RewardBound { state: usize, action: usize, value: f64 },
    #[error("discount factor {0} outside (0, 1)")]
    Gamma(f64),
}

/// A finite discounted MDP with deterministic rewards.
///
/// Transitions are stored action-major, `P_a(s, s')` at `(a * S + s) * S + s'`;
/// rewards are stored row-major, `r(s, a)` at `s * A + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
}

impl TabularMdp {
    /// Assembles a model from flat buffers, checking only buffer lengths.
    ///
    /// The result may violate the model invariants; run [`validate_mdp`] or
    /// use [`TabularMdp::new`] when the data comes from outside.
    pub fn from_parts(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        let nt = num_actions * num_states * num_states;
        if transitions.len() != nt {
            return Err(Error::shape(
                format!("{nt} transition entries"),
                format!("{}", transitions.len()),
            ));
        }
        let nr = num_states * num_actions;
        if rewards.len() != nr {
            return Err(Error::shape(
                format!("{nr} reward entries"),
                format!("{}", rewards.len()),
            ));
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            gamma,
        })
    }

    /// Like [`TabularMdp::from_parts`] but rejects models violating any invariant.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self::from_parts(num_states, num_actions, gamma, transitions, rewards)?;
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    /// Builds a model from nested `[a][s][s']` transitions and `[s][a]` rewards.
    pub fn from_nested(
        gamma: f64,
        transitions: &[Vec<Vec<f64>>],
        rewards: &[Vec<f64>],
    ) -> Result<Self> {
        let num_actions = transitions.len();
        let num_states = rewards.len();
        let mut flat_p = Vec::with_capacity(num_actions * num_states * num_states);
        for (a, slice) in transitions.iter().enumerate() {
            if slice.len() != num_states {
                return Err(Error::shape(
                    format!("{num_states} rows in transitions[{a}]"),
                    slice.len().to_string(),
                ));
            }
            for (s, row) in slice.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::shape(
                        format!("{num_states} entries in transitions[{a}][{s}]"),
                        row.len().to_string(),
                    ));
                }
                flat_p.extend_from_slice(row);
            }
        }
        let mut flat_r = Vec::with_capacity(num_states * num_actions);
        for (s, row) in rewards.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::shape(
                    format!("{num_actions} entries in rewards[{s}]"),
                    row.len().to_string(),
                ));
            }
            flat_r.extend_from_slice(row);
        }
        Self::from_parts(num_states, num_actions, gamma, flat_p, flat_r)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `|S| * |A|`.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `P_a(s, s')`.
    #[inline]
    pub fn transition(&self, action: usize, state: usize, next_state: usize) -> f64 {
        self.transitions[(action * self.num_states + state) * self.num_states + next_state]
    }

    /// The distribution `P_a(s, .)` over next states.
    #[inline]
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (action * self.num_states + state) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.num_actions + action]
    }

    /// Rewards laid out `[s][a]` row-major.
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Transition tensor laid out `[a][s][s']`.
    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// Nested-array document for this model, optionally carrying a distribution.
    pub fn to_document(&self, distribution: Option<&SamplingDistribution>) -> MdpDocument {
        let s = self.num_states;
        let transitions = (0..self.num_actions)
            .map(|a| (0..s).map(|i| self.transition_row(i, a).to_vec()).collect())
            .collect();
        let rewards = self
            .rewards
            .chunks(self.num_actions)
            .map(<[f64]>::to_vec)
            .collect();
        MdpDocument {
            num_states: self.num_states,
            num_actions: self.num_actions,
            gamma: self.gamma,
            transitions,
            rewards,
            distribution: distribution.map(SamplingDistribution::to_nested),
        }
    }

    pub fn to_json(&self, distribution: Option<&SamplingDistribution>) -> String {
        serde_json::to_string_pretty(&self.to_document(distribution))
            .expect("MDP documents always serialize")
    }

    /// Tables of this model with the same shape as `other`.
    pub fn same_shape(&self, num_states: usize, num_actions: usize) -> bool {
        self.num_states == num_states && self.num_actions == num_actions
    }
}

/// Checks every model invariant and reports the first violation.
pub fn validate_mdp(mdp: &TabularMdp) -> Result<(), MdpViolation> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    if ns == 0 || na == 0 {
        return Err(MdpViolation::Empty {
            num_states: ns,
            num_actions: na,
        });
    }
    for a in 0..na {
        for s in 0..ns {
            let row = mdp.transition_row(s, a);
            for (s2, &p) in row.iter().enumerate() {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(MdpViolation::BadProbability {
                        action: a,
                        state: s,
                        next_state: s2,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MdpViolation::RowSum {
                    action: a,
                    state: s,
                    sum,
                    tol: STOCHASTIC_TOL,
                });
            }
        }
    }
    for s in 0..ns {
        for a in 0..na {
            let r = mdp.reward(s, a);
            if !(-1.0..=1.0).contains(&r) {
                return Err(MdpViolation::RewardBound {
                    state: s,
                    action: a,
                    value: r,
                });
            }
        }
    }
    if !(mdp.gamma > 0.0 && mdp.gamma < 1.0) {
        return Err(MdpViolation::Gamma(mdp.gamma));
    }
    Ok(())
}

/// Garnet-style random instance.
///
/// Each row `P_a(s, .)` has exactly `branching` nonzero entries on distinct
/// next states, with weights drawn from `(0, 1]` and divided by their sum.
/// Rewards are uniform on `[-1, 1]`. The draw uses the generator stream of
/// `seed`, so equal seeds give bit-identical models.
pub fn random_mdp(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    branching: usize,
) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::arg("num_states/num_actions", "must be positive"));
    }
    if branching == 0 || branching > num_states {
        return Err(Error::arg(
            "branching",
            format!("must be in 1..={num_states}, got {branching}"),
        ));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::arg("gamma", format!("{gamma} outside (0, 1)")));
    }
    let mut rng = stream_rng(seed, STREAM_GENERATOR);
    let mut transitions = vec![0.0; num_actions * num_states * num_states];
    let mut weights = vec![0.0; branching];
    for row in transitions.chunks_mut(num_states) {
        let support = index::sample(&mut rng, num_states, branching);
        for w in weights.iter_mut() {
            // (0, 1]: strictly positive
            *w = 1.0 - rng.random::<f64>();
        }
        let total: f64 = weights.iter().sum();
        for (next, w) in support.iter().zip(&weights) {
            row[next] = w / total;
        }
    }
    let rewards = (0..num_states * num_actions)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    TabularMdp::new(num_states, num_actions, gamma, transitions, rewards)
}

/// Fixed distribution `d_a(s)` over state-action pairs, with its extreme
/// probabilities `c = min d_a(s)` and `L = max d_a(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
    c_min: f64,
    l_max: f64,
}

impl SamplingDistribution {
    /// Uniform distribution, `c = L = 1 / (|S||A|)`.
    pub fn uniform(num_states: usize, num_actions: usize) -> Result<Self> {
        let n = num_states * num_actions;
        if n == 0 {
            return Err(Error::Distribution("empty state-action space".into()));
        }
        let p = 1.0 / n as f64;
        Ok(Self {
            num_states,
            num_actions,
            probs: vec![p; n],
            c_min: p,
            l_max: p,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `d_a(s)`.
    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.num_actions + action]
    }

    /// Probabilities laid out `[s][a]` row-major.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `c`, the smallest pair probability.
    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    /// `L`, the largest pair probability.
    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn is_uniform(&self) -> bool {
        self.c_min == self.l_max
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.probs.chunks(self.num_actions).map(<[f64]>::to_vec).collect()
    }
}

/// Validates a `[s][a]` probability matrix and renormalizes it exactly.
///
/// Every entry must be strictly positive and the total within
/// [`DISTRIBUTION_INPUT_TOL`] of one.
pub fn make_distribution(probs: &[Vec<f64>]) -> Result<SamplingDistribution> {
    let num_states = probs.len();
    let num_actions = probs.first().map_or(0, Vec::len);
    if num_states == 0 || num_actions == 0 {
        return Err(Error::Distribution("empty probability matrix".into()));
    }
    let mut flat = Vec::with_capacity(num_states * num_actions);
    for (s, row) in probs.iter().enumerate() {
        if row.len() != num_actions {
            return Err(Error::shape(
                format!("{num_actions} entries in distribution[{s}]"),
                row.len().to_string(),
            ));
        }
        for (a, &p) in row.iter().enumerate() {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Distribution(format!(
                    "d_{a}({s}) = {p} must be strictly positive"
                )));
            }
        }
        flat.extend_from_slice(row);
    }
    let total: f64 = flat.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_INPUT_TOL {
        return Err(Error::Distribution(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    for p in flat.iter_mut() {
        *p /= total;
    }
    let c_min = flat.iter().copied().fold(f64::INFINITY, f64::min);
    let l_max = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SamplingDistribution {
        num_states,
        num_actions,
        probs: flat,
        c_min,
        l_max,
    })
}

/// On-disk MDP schema.
///
/// ```json
/// {
///   "num_states": 2,
///   "num_actions": 1,
///   "gamma": 0.5,
///   "transitions": [[[0.0, 1.0], [0.0, 1.0]]],
///   "rewards": [[1.0], [1.0]],
///   "distribution": [[0.5], [0.5]]
/// }
/// ```
///
/// `transitions` is indexed `[a][s][s']`, `rewards` and the optional
/// `distribution` are indexed `[s][a]`. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Vec<Vec<f64>>>,
}

impl MdpDocument {
    /// Converts to a validated model plus the optional distribution.
    pub fn into_model(self) -> Result<(TabularMdp, Option<SamplingDistribution>)> {
        if self.transitions.len() != self.num_actions {
            return Err(Error::shape(
                format!("{} action slices", self.num_actions),
                self.transitions.len().to_string(),
            ));
        }
        if self.rewards.len() != self.num_states {
            return Err(Error::shape(
                format!("{} reward rows", self.num_states),
                self.rewards.len().to_string(),
            ));
        }
        let mdp = TabularMdp::from_nested(self.gamma, &self.transitions, &self.rewards)?;
        validate_mdp(&mdp)?;
        let dist = match self.distribution {
            Some(d) => {
                let dist = make_distribution(&d)?;
                if !mdp.same_shape(dist.num_states, dist.num_actions) {
                    return Err(Error::shape(
                        format!("{}x{} distribution", mdp.num_states, mdp.num_actions),
                        format!("{}x{}", dist.num_states, dist.num_actions),
                    ));
                }
                Some(dist)
            }
            None => None,
        };
        Ok((mdp, dist))
    }
}

pub fn parse_mdp(text: &str) -> Result<(TabularMdp, Option<SamplingDistribution>)> {
    let doc: MdpDocument = serde_json::from_str(text)?;
    doc.into_model()
}

pub fn load_mdp(path: impl AsRef<Path>) -> Result<(TabularMdp, Option<SamplingDistribution>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read MDP file {}: {e}", path.display()))
    })?;
    parse_mdp(&text)
}

impl fmt::Display for TabularMdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TabularMdp(|S|={}, |A|={}, gamma={})",
            self.num_states, self.num_actions, self.gamma
        )
    }
}
