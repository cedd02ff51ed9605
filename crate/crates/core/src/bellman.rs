//! Exact Bellman machinery: the optimality operator, greedy policies, value
//! iteration, exact policy evaluation, and the stacked matrix forms used to
//! cross-check them.
//!
//! Matrix forms stack per-action blocks: the pair `(s, a)` sits at index
//! `a * |S| + s`. Tables themselves stay state-major (see [`QTable`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{SamplingDistribution, TabularMdp};
use crate::table::{Policy, QTable};

/// Default accuracy of the value-iteration oracle, in `‖Q - Q*‖_∞`.
pub const ORACLE_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 10_000_000;

fn check_table(q: &QTable, mdp: &TabularMdp) -> Result<()> {
    if !mdp.same_shape(q.num_states(), q.num_actions()) {
        return Err(Error::shape(
            format!("{}x{} table", mdp.num_states(), mdp.num_actions()),
            format!("{}x{}", q.num_states(), q.num_actions()),
        ));
    }
    Ok(())
}

/// `r(s,a) + γ Σ_{s'} P_a(s,s') v(s')` for a given next-state value vector.
pub(crate) fn backup(mdp: &TabularMdp, next_values: &[f64]) -> QTable {
    let gamma = mdp.gamma();
    QTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        let expected: f64 = mdp
            .transition_row(s, a)
            .iter()
            .zip(next_values)
            .map(|(p, v)| p * v)
            .sum();
        mdp.reward(s, a) + gamma * expected
    })
}

/// The optimality operator `(TQ)(s,a) = Σ_{s'} P_a(s,s') (r(s,a) + γ max_{a'} Q(s',a'))`.
///
/// Rows of `P_a(s, .)` sum to one, so the reward is added once outside the
/// sum; with `γ = 0` the result is exactly the reward table.
pub fn apply_bellman(q: &QTable, mdp: &TabularMdp) -> Result<QTable> {
    check_table(q, mdp)?;
    Ok(backup(mdp, &q.state_values()))
}

/// Per-state argmax of `q`, lowest action index on ties.
pub fn greedy_policy(q: &QTable) -> Policy {
    let actions = (0..q.num_states()).map(|s| q.row_argmax(s).0).collect();
    Policy::new(actions, q.num_actions()).expect("argmax is always in range")
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub q: QTable,
    /// Number of operator applications performed.
    pub iterations: usize,
    /// `‖T q - q‖_∞` of the returned table.
    pub residual: f64,
    /// Residual threshold `tol (1-γ) / (2γ)` used to stop.
    pub threshold: f64,
}

/// Iterates `Q <- TQ` from zero until `‖TQ_n - Q_n‖_∞ ≤ tol (1-γ)/(2γ)` and
/// returns `TQ_n`, which is then within `tol/2` of `Q*` and has residual
/// below the same threshold.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<ValueIteration> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::arg("tol", format!("must be positive, got {tol}")));
    }
    let gamma = mdp.gamma();
    let threshold = tol * (1.0 - gamma) / (2.0 * gamma);
    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut iterations = 0;
    loop {
        let next = backup(mdp, &q.state_values());
        iterations += 1;
        let gap = next.sub(&q)?.inf_norm();
        q = next;
        if gap <= threshold {
            break;
        }
        if iterations >= MAX_SWEEPS {
            log::warn!("value iteration stopped after {iterations} sweeps at residual {gap:e}");
            break;
        }
    }
    let residual = apply_bellman(&q, mdp)?.sub(&q)?.inf_norm();
    log::debug!("value iteration: {iterations} sweeps, residual {residual:e}");
    Ok(ValueIteration {
        q,
        iterations,
        residual,
        threshold,
    })
}

#[derive(Debug, Clone)]
pub struct PolicyValue {
    pub q: QTable,
    pub v: Vec<f64>,
    /// `‖R + γ P Π_π Q^π - Q^π‖_∞` of the returned table.
    pub residual: f64,
}

/// Exact `Q^π` and `V^π` of a deterministic policy.
///
/// Solves the state system `(I - γ P_π) V = R_π` by LU with one step of
/// iterative refinement and lifts it through `Q^π = R + γ P V^π`, which is the
/// unique solution of `Q^π = R + γ P Π_π Q^π`.
pub fn policy_evaluation(mdp: &TabularMdp, pi: &Policy) -> Result<PolicyValue> {
    let ns = mdp.num_states();
    if pi.num_states() != ns {
        return Err(Error::shape(format!("policy over {ns} states"), pi.num_states().to_string()));
    }
    if let Some(&a) = pi.actions().iter().find(|&&a| a >= mdp.num_actions()) {
        return Err(Error::arg("policy", format!("action {a} out of range")));
    }
    let gamma = mdp.gamma();
    let system = DMatrix::from_fn(ns, ns, |s, s2| {
        let id = if s == s2 { 1.0 } else { 0.0 };
        id - gamma * mdp.transition(pi.action(s), s, s2)
    });
    let rhs = DVector::from_fn(ns, |s, _| mdp.reward(s, pi.action(s)));
    let lu = system.clone().lu();
    let mut v = lu
        .solve(&rhs)
        .ok_or_else(|| Error::arg("gamma", "policy system is singular"))?;
    let correction = lu
        .solve(&(&rhs - &system * &v))
        .ok_or_else(|| Error::arg("gamma", "policy system is singular"))?;
    v += correction;

    let v: Vec<f64> = v.iter().copied().collect();
    let q = backup(mdp, &v);
    let on_policy: Vec<f64> = (0..ns).map(|s| q.get(s, pi.action(s))).collect();
    let residual = backup(mdp, &on_policy).sub(&q)?.inf_norm();
    Ok(PolicyValue { q, v, residual })
}

/// Exact optimal values plus the accuracy they were solved to.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub q_star: QTable,
    pub v_star: Vec<f64>,
    pub tolerance: f64,
    pub iterations: usize,
}

impl Oracle {
    pub fn solve(mdp: &TabularMdp, tol: f64) -> Result<Self> {
        let vi = value_iteration(mdp, tol)?;
        let v_star = vi.q.state_values();
        Ok(Self {
            q_star: vi.q,
            v_star,
            tolerance: tol,
            iterations: vi.iterations,
        })
    }
}

/// Stacked linear-algebra view of an MDP.
#[derive(Debug, Clone)]
pub struct MatrixForms {
    /// `|S||A| x |S|`, blocks `P_1; ...; P_|A|` stacked vertically.
    pub p: DMatrix<f64>,
    /// `|S||A|` rewards, blocks `R_1; ...; R_|A|`.
    pub r: DVector<f64>,
    /// Diagonal of `D`, blocks `d_1(.); ...; d_|A|(.)`.
    pub d: DVector<f64>,
    /// `|S| x |S||A|`, row `s` is `e_{π(s)}ᵀ ⊗ e_sᵀ`.
    pub pi: DMatrix<f64>,
    pub gamma: f64,
}

/// Index of pair `(s, a)` in the stacked layout.
#[inline]
pub fn stacked_index(num_states: usize, state: usize, action: usize) -> usize {
    action * num_states + state
}

pub fn stack(q: &QTable) -> DVector<f64> {
    let ns = q.num_states();
    let mut out = DVector::zeros(q.values().len());
    for s in 0..ns {
        for a in 0..q.num_actions() {
            out[stacked_index(ns, s, a)] = q.get(s, a);
        }
    }
    out
}

pub fn unstack(x: &DVector<f64>, num_states: usize, num_actions: usize) -> QTable {
    QTable::from_fn(num_states, num_actions, |s, a| x[stacked_index(num_states, s, a)])
}

/// Builds `P`, `R`, `D` and `Π_π`.
pub fn matrix_forms(mdp: &TabularMdp, d: &SamplingDistribution, pi: &Policy) -> Result<MatrixForms> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    if !mdp.same_shape(d.num_states(), d.num_actions()) {
        return Err(Error::shape(
            format!("{ns}x{na} distribution"),
            format!("{}x{}", d.num_states(), d.num_actions()),
        ));
    }
    if pi.num_states() != ns {
        return Err(Error::shape(format!("policy over {ns} states"), pi.num_states().to_string()));
    }
    let n = ns * na;
    let mut p = DMatrix::zeros(n, ns);
    let mut r = DVector::zeros(n);
    let mut dv = DVector::zeros(n);
    for a in 0..na {
        for s in 0..ns {
            let i = stacked_index(ns, s, a);
            for s2 in 0..ns {
                p[(i, s2)] = mdp.transition(a, s, s2);
            }
            r[i] = mdp.reward(s, a);
            dv[i] = d.prob(s, a);
        }
    }
    let mut pim = DMatrix::zeros(ns, n);
    for s in 0..ns {
        pim[(s, stacked_index(ns, s, pi.action(s)))] = 1.0;
    }
    Ok(MatrixForms {
        p,
        r,
        d: dv,
        pi: pim,
        gamma: mdp.gamma(),
    })
}

impl MatrixForms {
    /// `P Π_π`, the pair-to-pair transition matrix under π.
    pub fn pair_transition(&self) -> DMatrix<f64> {
        &self.p * &self.pi
    }

    /// `R + γ P Π_π Q`.
    pub fn bellman(&self, q: &QTable) -> QTable {
        let x = &self.r + self.gamma * (&self.p * (&self.pi * stack(q)));
        unstack(&x, q.num_states(), q.num_actions())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn chain(gamma: f64) -> TabularMdp {
        // s0 -> s1, s1 -> s1, r = 1
        TabularMdp::from_parts(2, 1, gamma, vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 1.0]).unwrap()
    }

    fn random_table(rng: &mut impl Rng, ns: usize, na: usize, scale: f64) -> QTable {
        QTable::from_fn(ns, na, |_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn zero_discount_returns_rewards() {
        let mdp = random_mdp(1, 4, 3, 0.5, 2).unwrap();
        let mdp = TabularMdp::from_parts(4, 3, 0.0, mdp.transitions().to_vec(), mdp.rewards().to_vec()).unwrap();
        let q = QTable::constant(4, 3, 7.0);
        assert_eq!(apply_bellman(&q, &mdp).unwrap().values(), mdp.rewards());
        let vi = value_iteration(&mdp, 1e-10).unwrap();
        assert_eq!(vi.iterations, 1);
        assert_eq!(vi.q.values(), mdp.rewards());
        let pv = policy_evaluation(&mdp, &Policy::new(vec![2, 1, 0, 0], 3).unwrap()).unwrap();
        for (x, r) in pv.q.values().iter().zip(mdp.rewards()) {
            assert_relative_eq!(x, r, epsilon = 1e-15);
        }
    }

    #[test]
    fn chain_backup_by_hand() {
        let out = apply_bellman(&QTable::zeros(2, 1), &chain(0.5)).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0]);
    }

    #[test]
    fn chain_policy_value() {
        let pv = policy_evaluation(&chain(0.5), &Policy::new(vec![0, 0], 1).unwrap()).unwrap();
        for x in pv.q.values() {
            assert_relative_eq!(*x, 2.0, epsilon = 1e-14);
        }
        assert!(pv.residual <= 1e-10);
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = TabularMdp::new(1, 1, 0.9, vec![1.0], vec![1.0]).unwrap();
        let vi = value_iteration(&mdp, 1e-10).unwrap();
        assert!((vi.q.get(0, 0) - 10.0).abs() <= 1e-10);
        assert!(vi.residual <= vi.threshold);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mdp = chain(0.5);
        assert!(apply_bellman(&QTable::zeros(3, 1), &mdp).is_err());
        assert!(value_iteration(&mdp, 0.0).is_err());
        assert!(policy_evaluation(&mdp, &Policy::new(vec![0], 1).unwrap()).is_err());
    }

    #[test]
    fn fixed_point_of_oracle() {
        let mdp = random_mdp(11, 6, 3, 0.95, 3).unwrap();
        let oracle = Oracle::solve(&mdp, ORACLE_TOL).unwrap();
        let tq = apply_bellman(&oracle.q_star, &mdp).unwrap();
        assert!(tq.sub(&oracle.q_star).unwrap().inf_norm() <= ORACLE_TOL);
        assert!(oracle.q_star.inf_norm() <= 1.0 / (1.0 - mdp.gamma()));
    }

    #[test]
    fn greedy_tie_break_and_unique() {
        let q = QTable::from_rows(&[vec![0.5, 0.5, 0.5], vec![0.1, 0.9, 0.3]]).unwrap();
        assert_eq!(greedy_policy(&q).actions(), &[0, 1]);
    }

    #[test]
    fn greedy_of_q_star_matches_brute_force_two_states() {
        for seed in 0..20 {
            let mdp = random_mdp(seed, 2, 3, 0.8, 2).unwrap();
            let oracle = Oracle::solve(&mdp, ORACLE_TOL).unwrap();
            let best = Policy::enumerate(2, 3)
                .map(|pi| {
                    let v = policy_evaluation(&mdp, &pi).unwrap().v;
                    (pi, v.iter().sum::<f64>())
                })
                .fold(None::<(Policy, f64)>, |acc, (pi, total)| match acc {
                    Some((_, t)) if t >= total => acc,
                    _ => Some((pi, total)),
                })
                .unwrap()
                .0;
            let greedy = greedy_policy(&oracle.q_star);
            let vg = policy_evaluation(&mdp, &greedy).unwrap().v;
            let vb = policy_evaluation(&mdp, &best).unwrap().v;
            for (a, b) in vg.iter().zip(&vb) {
                assert_relative_eq!(a, b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn value_iteration_residual_contracts() {
        let mdp = random_mdp(5, 5, 3, 0.9, 5).unwrap();
        let mut q = QTable::zeros(5, 3);
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let tq = apply_bellman(&q, &mdp).unwrap();
            let res = tq.sub(&q).unwrap().inf_norm();
            assert!(res <= mdp.gamma() * prev + 1e-13, "{res} > γ·{prev}");
            prev = res;
            q = tq;
        }
    }

    #[test]
    fn pair_transition_is_stochastic_and_pi_is_one_hot() {
        let mdp = random_mdp(3, 4, 3, 0.7, 2).unwrap();
        let d = SamplingDistribution::uniform(4, 3).unwrap();
        let pi = Policy::new(vec![2, 0, 1, 1], 3).unwrap();
        let m = matrix_forms(&mdp, &d, &pi).unwrap();
        for s in 0..4 {
            let row = m.pi.row(s);
            assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(row.sum(), 1.0);
        }
        let pp = m.pair_transition();
        for i in 0..12 {
            assert_relative_eq!(pp.row(i).sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn matrix_form_matches_operator() {
        let mut rng = crate::seed::stream_rng(17, 9);
        for seed in 0..25 {
            let mdp = random_mdp(seed, 3, 2, 0.9, 3).unwrap();
            let d = SamplingDistribution::uniform(3, 2).unwrap();
            let q = random_table(&mut rng, 3, 2, 5.0);
            let m = matrix_forms(&mdp, &d, &greedy_policy(&q)).unwrap();
            let a = m.bellman(&q);
            let b = apply_bellman(&q, &mdp).unwrap();
            assert!(a.sub(&b).unwrap().inf_norm() <= 1e-12);
        }
    }

    #[test]
    fn stacking_round_trips() {
        let q = QTable::from_fn(3, 2, |s, a| (10 * s + a) as f64);
        let x = stack(&q);
        assert_eq!(x[stacked_index(3, 2, 1)], 21.0);
        assert_eq!(unstack(&x, 3, 2), q);
    }
}
