use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `|S| x |A|` table of action values, row-major by state.
///
/// Plays the role of the online estimate, the frozen target, the optimal
/// `Q*`, and gradient-shaped quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::constant(num_states, num_actions, 0.0)
    }

    pub fn constant(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_vec(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::shape(
                format!("{} values", num_states * num_actions),
                values.len().to_string(),
            ));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    /// Builds a table from `[s][a]` rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::shape(
                format!("rows of length {num_actions}"),
                "ragged rows",
            ));
        }
        Ok(Self {
            num_states,
            num_actions,
            values: rows.concat(),
        })
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        Self {
            num_states,
            num_actions,
            values,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.num_actions;
        &self.values[start..start + self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.num_actions).map(<[f64]>::to_vec).collect()
    }

    /// Lowest-index argmax of row `state` together with the maximum.
    #[inline]
    pub fn row_argmax(&self, state: usize) -> (usize, f64) {
        argmax(self.row(state))
    }

    #[inline]
    pub fn row_max(&self, state: usize) -> f64 {
        self.row_argmax(state).1
    }

    /// `V_Q(s) = max_a Q(s, a)` for every state.
    pub fn state_values(&self) -> Vec<f64> {
        (0..self.num_states).map(|s| self.row_max(s)).collect()
    }

    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Entrywise `self - other`.
    pub fn sub(&self, other: &QTable) -> Result<QTable> {
        self.check_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(QTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values,
        })
    }

    pub fn check_shape(&self, other: &QTable) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{} table", self.num_states, self.num_actions),
                format!("{}x{}", other.num_states, other.num_actions),
            ));
        }
        Ok(())
    }
}

/// Lowest-index argmax; ties resolve to the smallest index.
#[inline]
pub fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_val = xs[0];
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best_val {
            best = i;
            best_val = x;
        }
    }
    (best, best_val)
}

/// Deterministic stationary policy, one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some((s, &a)) = actions.iter().enumerate().find(|(_, &a)| a >= num_actions) {
            return Err(Error::arg(
                "policy",
                format!("action {a} at state {s} out of range 0..{num_actions}"),
            ));
        }
        Ok(Self(actions))
    }

    #[inline]
    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn num_states(&self) -> usize {
        self.0.len()
    }

    /// All `num_actions^num_states` deterministic policies, in lexicographic order.
    pub fn enumerate(num_states: usize, num_actions: usize) -> impl Iterator<Item = Policy> {
        let total = (num_actions as u64).pow(num_states as u32);
        (0..total).map(move |mut code| {
            let mut actions = vec![0; num_states];
            for slot in actions.iter_mut() {
                *slot = (code % num_actions as u64) as usize;
                code /= num_actions as u64;
            }
            Policy(actions)
        })
    }
}
