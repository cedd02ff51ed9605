//! The per-iteration regression subproblem
//!
//! ```text
//! F(Q) = l(Q; Q_k) = ½ Σ_{s,a} d_a(s) ([T Q_k](s,a) - Q(s,a))²
//! ```
//!
//! its exact gradient `-D (T Q_k - Q)`, and the one-sample stochastic gradient
//! that drives the inner loop. The discount factor appears in `T Q_k` in every
//! formula here.

use crate::bellman::apply_bellman;
use crate::error::{Error, Result};
use crate::mdp::{SamplingDistribution, TabularMdp};
use crate::table::QTable;

/// One i.i.d. draw `(s, a) ~ d`, `s' ~ P_a(s, .)` with its reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
}

impl TransitionSample {
    pub fn from_mdp(mdp: &TabularMdp, state: usize, action: usize, next_state: usize) -> Self {
        Self {
            state,
            action,
            next_state,
            reward: mdp.reward(state, action),
        }
    }
}

/// One-hot stochastic gradient: `value` at `(state, action)`, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseGradient {
    pub state: usize,
    pub action: usize,
    pub value: f64,
}

impl SparseGradient {
    pub fn to_dense(&self, num_states: usize, num_actions: usize) -> QTable {
        let mut g = QTable::zeros(num_states, num_actions);
        g.set(self.state, self.action, self.value);
        g
    }

    pub fn norm_sq(&self) -> f64 {
        self.value * self.value
    }
}

fn check(q: &QTable, q_target: &QTable, mdp: &TabularMdp, d: &SamplingDistribution) -> Result<()> {
    q.check_shape(q_target)?;
    if !mdp.same_shape(d.num_states(), d.num_actions()) {
        return Err(Error::shape(
            format!("{}x{} distribution", mdp.num_states(), mdp.num_actions()),
            format!("{}x{}", d.num_states(), d.num_actions()),
        ));
    }
    Ok(())
}

/// `l(q; q_target)`.
pub fn loss(q: &QTable, q_target: &QTable, mdp: &TabularMdp, d: &SamplingDistribution) -> Result<f64> {
    check(q, q_target, mdp, d)?;
    let tq = apply_bellman(q_target, mdp)?;
    Ok(loss_against(q, &tq, d))
}

/// `½ ‖target - q‖_D²` for an already computed `target = T q_target`.
pub fn loss_against(q: &QTable, target: &QTable, d: &SamplingDistribution) -> f64 {
    0.5 * q
        .values()
        .iter()
        .zip(target.values())
        .zip(d.probs())
        .map(|((x, t), w)| w * (t - x) * (t - x))
        .sum::<f64>()
}

/// `∇F(q) = -D (T q_target - q)`.
pub fn exact_gradient(
    q: &QTable,
    q_target: &QTable,
    mdp: &TabularMdp,
    d: &SamplingDistribution,
) -> Result<QTable> {
    check(q, q_target, mdp, d)?;
    let tq = apply_bellman(q_target, mdp)?;
    Ok(QTable::from_fn(q.num_states(), q.num_actions(), |s, a| {
        -d.prob(s, a) * (tq.get(s, a) - q.get(s, a))
    }))
}

/// Negated TD error `-(r + γ max_{a'} q_target(s', a') - q(s, a))` placed at
/// `(s, a)`.
pub fn stochastic_gradient(
    sample: &TransitionSample,
    q: &QTable,
    q_target: &QTable,
    gamma: f64,
) -> SparseGradient {
    let bootstrap = q_target.row_max(sample.next_state);
    SparseGradient {
        state: sample.state,
        action: sample.action,
        value: -(sample.reward + gamma * bootstrap - q.get(sample.state, sample.action)),
    }
}

/// `E[g]` by exhaustive enumeration of `(s, a, s')` with weights
/// `d_a(s) P_a(s, s')`.
pub fn expected_stochastic_gradient(
    q: &QTable,
    q_target: &QTable,
    mdp: &TabularMdp,
    d: &SamplingDistribution,
) -> Result<QTable> {
    check(q, q_target, mdp, d)?;
    let (ns, na) = q.shape();
    let mut mean = QTable::zeros(ns, na);
    for s in 0..ns {
        for a in 0..na {
            let mut acc = 0.0;
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let sample = TransitionSample::from_mdp(mdp, s, a, s2);
                acc += d.prob(s, a) * p * stochastic_gradient(&sample, q, q_target, mdp.gamma()).value;
            }
            mean.set(s, a, acc);
        }
    }
    Ok(mean)
}

/// `E‖g‖²` by exhaustive enumeration.
pub fn gradient_second_moment(
    q: &QTable,
    q_target: &QTable,
    mdp: &TabularMdp,
    d: &SamplingDistribution,
) -> Result<f64> {
    check(q, q_target, mdp, d)?;
    let (ns, na) = q.shape();
    let mut total = 0.0;
    for s in 0..ns {
        for a in 0..na {
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                let sample = TransitionSample::from_mdp(mdp, s, a, s2);
                total += d.prob(s, a) * p * stochastic_gradient(&sample, q, q_target, mdp.gamma()).norm_sq();
            }
        }
    }
    Ok(total)
}

/// Right-hand side of the second-moment bound
/// `12 γ² |S||A| ‖Q* - Q_k‖_∞² + 8 ‖∇F(Q)‖²_{D⁻¹} + 18 |S||A| / (1-γ)²`.
pub fn second_moment_envelope(
    q: &QTable,
    q_target: &QTable,
    q_star: &QTable,
    mdp: &TabularMdp,
    d: &SamplingDistribution,
) -> Result<f64> {
    let grad = exact_gradient(q, q_target, mdp, d)?;
    let gamma = mdp.gamma();
    let pairs = mdp.num_pairs() as f64;
    let target_err = q_star.sub(q_target)?.inf_norm();
    let grad_dinv: f64 = grad
        .values()
        .iter()
        .zip(d.probs())
        .map(|(g, w)| g * g / w)
        .sum();
    Ok(12.0 * gamma * gamma * pairs * target_err * target_err
        + 8.0 * grad_dinv
        + 18.0 * pairs / ((1.0 - gamma) * (1.0 - gamma)))
}
