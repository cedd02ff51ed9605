//! Closed-form step sizes and sample budgets for periodic Q-learning.
//!
//! With `c = min d_a(s)` and `L = max d_a(s)`:
//!
//! | quantity | value |
//! |---|---|
//! | step size | `β_t = β / (λ + t)`, `β = 2/c`, `λ = 16 L / c²` |
//! | inner steps | `N ≥ 2048 |S||A| L / (ε² (1-γ)⁴ c³)` |
//! | outer iterations | `T ≥ ln(4 / ((1-γ) ε)) / ln(1/γ)` |
//! | samples for `E‖Q_T - Q*‖_∞ ≤ ε` | `N · T` |
//! | samples for `E‖V^{π_{Q_T}} - V*‖_∞ ≤ ε` | `8192 |S||A| L ln(8 / ((1-γ)² ε)) / (ε² (1-γ)⁶ ln(1/γ) c³)` |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::SamplingDistribution;

/// Harmonic schedule `β_t = beta / (lambda + t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub beta: f64,
    pub lambda: f64,
}

impl StepSchedule {
    #[inline]
    pub fn step(&self, t: u64) -> f64 {
        self.beta / (self.lambda + t as f64)
    }

    /// `β_0 = beta / lambda`.
    pub fn initial_step(&self) -> f64 {
        self.beta / self.lambda
    }

    /// Whether `β_0 ≤ c / (8L)`, the largest step the inner analysis allows.
    pub fn is_theory_compliant(&self, d: &SamplingDistribution) -> bool {
        let cap = d.c_min() / (8.0 * d.l_max());
        self.initial_step() <= cap * (1.0 + 1e-12)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::arg("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::arg("lambda", format!("must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `β = 2/c`, `λ = 16 L / c²`, hence `β_0 = c / (8L)`.
pub fn theory_schedule(d: &SamplingDistribution) -> StepSchedule {
    let c = d.c_min();
    StepSchedule {
        beta: 2.0 / c,
        lambda: 16.0 * d.l_max() / (c * c),
    }
}

/// Inputs shared by every budget formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub gamma: f64,
    pub num_states: usize,
    pub num_actions: usize,
    /// Smallest pair probability.
    pub c: f64,
    /// Largest pair probability.
    pub l: f64,
}

impl BoundInputs {
    pub fn new(epsilon: f64, gamma: f64, num_states: usize, num_actions: usize, c: f64, l: f64) -> Self {
        Self { epsilon, gamma, num_states, num_actions, c, l }
    }

    /// `c = L = 1 / (|S||A|)`.
    pub fn uniform(epsilon: f64, gamma: f64, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / (num_states * num_actions) as f64;
        Self::new(epsilon, gamma, num_states, num_actions, p, p)
    }

    pub fn with_distribution(epsilon: f64, gamma: f64, d: &SamplingDistribution) -> Self {
        Self::new(epsilon, gamma, d.num_states(), d.num_actions(), d.c_min(), d.l_max())
    }

    fn pairs(&self) -> f64 {
        (self.num_states * self.num_actions) as f64
    }

    /// `L / c³`.
    fn spread(&self) -> f64 {
        self.l / (self.c * self.c * self.c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::arg("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::arg("gamma", format!("{} outside (0, 1)", self.gamma)));
        }
        if self.num_states == 0 || self.num_actions == 0 {
            return Err(Error::arg("num_states/num_actions", "must be positive"));
        }
        if !(self.c > 0.0 && self.c <= self.l && self.l <= 1.0) {
            return Err(Error::arg("c/L", format!("need 0 < c ≤ L ≤ 1, got c={}, L={}", self.c, self.l)));
        }
        Ok(())
    }
}

fn to_count(x: f64, name: &'static str) -> Result<u64> {
    let n = x.ceil();
    if !(n.is_finite() && n < u64::MAX as f64) {
        return Err(Error::arg(name, format!("budget {x:e} does not fit in 64 bits")));
    }
    Ok(n.max(0.0) as u64)
}

/// Un-rounded inner-step requirement.
pub fn inner_steps_bound(p: &BoundInputs) -> Result<f64> {
    p.validate()?;
    let one_minus = 1.0 - p.gamma;
    let denom = p.epsilon * p.epsilon * one_minus.powi(4);
    Ok(2048.0 * p.pairs() / denom * p.spread())
}

/// Smallest integer `N` meeting the inner-step requirement.
pub fn required_inner_steps(p: &BoundInputs) -> Result<u64> {
    to_count(inner_steps_bound(p)?, "epsilon")
}

/// Un-rounded outer-iteration requirement, zero once `ε ≥ 4/(1-γ)`.
pub fn outer_iters_bound(epsilon: f64, gamma: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::arg("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::arg("gamma", format!("{gamma} outside (0, 1)")));
    }
    let ratio = 4.0 / ((1.0 - gamma) * epsilon);
    if ratio <= 1.0 {
        return Ok(0.0);
    }
    Ok(ratio.ln() / (1.0 / gamma).ln())
}

/// Smallest integer `T` meeting the outer-iteration requirement.
pub fn required_outer_iters(epsilon: f64, gamma: f64) -> Result<u64> {
    to_count(outer_iters_bound(epsilon, gamma)?, "epsilon")
}

/// Samples sufficient for an `ε`-accurate `Q_T` in expectation.
pub fn sample_complexity_q(p: &BoundInputs) -> Result<f64> {
    Ok(inner_steps_bound(p)? * outer_iters_bound(p.epsilon, p.gamma)?)
}

/// Samples sufficient for an `ε`-optimal greedy policy in expectation; needs `ε ≤ 1`.
pub fn sample_complexity_policy(p: &BoundInputs) -> Result<f64> {
    p.validate()?;
    if p.epsilon > 1.0 {
        return Err(Error::arg("epsilon", format!("policy bound needs epsilon ≤ 1, got {}", p.epsilon)));
    }
    let one_minus = 1.0 - p.gamma;
    let log_term = (8.0 / (one_minus * one_minus * p.epsilon)).ln();
    let denom = p.epsilon * p.epsilon * one_minus.powi(6) * (1.0 / p.gamma).ln();
    Ok(8192.0 * p.pairs() / denom * p.spread() * log_term)
}
