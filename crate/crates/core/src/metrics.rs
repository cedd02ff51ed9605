//! Per-realization error functionals. Expectations are taken by callers as
//! averages over independently seeded runs; [`MeanSe`] is the one summary
//! statistic used for that.

use serde::Serialize;

use crate::bellman::{apply_bellman, greedy_policy, policy_evaluation, Oracle};
use crate::error::{Error, Result};
use crate::mdp::{SamplingDistribution, TabularMdp};
use crate::table::QTable;

/// Norms of `q - reference`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    /// `‖x‖_∞`
    pub inf: f64,
    /// `‖x‖₂²`
    pub l2_sq: f64,
    /// `‖x‖_D² = Σ d_a(s) x(s,a)²`
    pub d_sq: f64,
}

impl Norms {
    pub fn l2(&self) -> f64 {
        self.l2_sq.sqrt()
    }
}

pub fn norms(q: &QTable, reference: &QTable, d: &SamplingDistribution) -> Result<Norms> {
    q.check_shape(reference)?;
    if q.shape() != (d.num_states(), d.num_actions()) {
        return Err(Error::shape(
            format!("{}x{} distribution", q.num_states(), q.num_actions()),
            format!("{}x{}", d.num_states(), d.num_actions()),
        ));
    }
    let mut out = Norms { inf: 0.0, l2_sq: 0.0, d_sq: 0.0 };
    for ((x, y), w) in q.values().iter().zip(reference.values()).zip(d.probs()) {
        let e = x - y;
        out.inf = out.inf.max(e.abs());
        out.l2_sq += e * e;
        out.d_sq += w * e * e;
    }
    Ok(out)
}

/// `‖V^{π_q} - V*‖_∞` where `π_q` is greedy in `q` and `V*(s) = max_a q_star(s, a)`.
pub fn policy_gap(mdp: &TabularMdp, q: &QTable, q_star: &QTable) -> Result<f64> {
    q.check_shape(q_star)?;
    let pv = policy_evaluation(mdp, &greedy_policy(q))?;
    Ok(pv
        .v
        .iter()
        .enumerate()
        .map(|(s, v)| (v - q_star.row_max(s)).abs())
        .fold(0.0, f64::max))
}

/// `‖q_new - T q_target‖₂²`.
pub fn inner_residual(q_new: &QTable, q_target: &QTable, mdp: &TabularMdp) -> Result<f64> {
    q_new.check_shape(q_target)?;
    let tq = apply_bellman(q_target, mdp)?;
    Ok(sq_distance(q_new, &tq))
}

pub(crate) fn sq_distance(a: &QTable, b: &QTable) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub q_inf_error: f64,
    pub q_l2_error: f64,
    pub d_norm_error: f64,
    pub v_gap: Option<f64>,
    /// `‖Q_{k+1} - T Q_k‖₂²`, when the previous target is known.
    pub epsilon_k: Option<f64>,
}

/// Everything measurable about `q` against the oracle.
pub fn error_report(
    mdp: &TabularMdp,
    d: &SamplingDistribution,
    q: &QTable,
    oracle: &Oracle,
    previous_target: Option<&QTable>,
    with_gap: bool,
) -> Result<ErrorReport> {
    let n = norms(q, &oracle.q_star, d)?;
    let v_gap = if with_gap {
        Some(policy_gap(mdp, q, &oracle.q_star)?)
    } else {
        None
    };
    let epsilon_k = previous_target
        .map(|qt| inner_residual(q, qt, mdp))
        .transpose()?;
    Ok(ErrorReport {
        q_inf_error: n.inf,
        q_l2_error: n.l2(),
        d_norm_error: n.d_sq,
        v_gap,
        epsilon_k,
    })
}

/// Sample mean and standard error `stdev / √n` (with `n - 1` in the variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::ORACLE_TOL;
    use crate::mdp::{make_distribution, random_mdp};
    use crate::seed::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn identical_tables_have_zero_norms() {
        let d = SamplingDistribution::uniform(3, 2).unwrap();
        let q = QTable::from_fn(3, 2, |s, a| (s * a) as f64);
        assert_eq!(norms(&q, &q, &d).unwrap(), Norms { inf: 0.0, l2_sq: 0.0, d_sq: 0.0 });
    }

    #[test]
    fn one_hot_difference() {
        let d = make_distribution(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let a = QTable::zeros(2, 2);
        let mut b = QTable::zeros(2, 2);
        b.set(1, 0, -0.5);
        let n = norms(&b, &a, &d).unwrap();
        assert_eq!(n.inf, 0.5);
        assert_eq!(n.l2(), 0.5);
        assert!((n.d_sq - d.prob(1, 0) * 0.25).abs() <= 1e-16);
    }

    #[test]
    fn norms_match_naive_loop() {
        let mut rng = stream_rng(1, 7);
        let d = SamplingDistribution::uniform(4, 3).unwrap();
        let a = QTable::from_fn(4, 3, |_, _| rng.random_range(-5.0..5.0));
        let b = QTable::from_fn(4, 3, |_, _| rng.random_range(-5.0..5.0));
        let n = norms(&a, &b, &d).unwrap();
        let (mut inf, mut l2, mut dn) = (0.0f64, 0.0, 0.0);
        for s in 0..4 {
            for a_ in 0..3 {
                let e = a.get(s, a_) - b.get(s, a_);
                inf = inf.max(e.abs());
                l2 += e * e;
                dn += d.prob(s, a_) * e * e;
            }
        }
        assert!((n.inf - inf).abs() <= 1e-14);
        assert!((n.l2_sq - l2).abs() <= 1e-14 * l2.max(1.0));
        assert!((n.d_sq - dn).abs() <= 1e-14 * dn.max(1.0));
    }

    #[test]
    fn inner_residual_cases() {
        let mdp = random_mdp(3, 4, 2, 0.9, 2).unwrap();
        let target = QTable::from_fn(4, 2, |s, a| s as f64 - a as f64);
        let tq = apply_bellman(&target, &mdp).unwrap();
        assert_eq!(inner_residual(&tq, &target, &mdp).unwrap(), 0.0);
        let shifted = QTable::from_fn(4, 2, |s, a| tq.get(s, a) + 0.25);
        let r = inner_residual(&shifted, &target, &mdp).unwrap();
        assert!((r - 8.0 * 0.0625).abs() <= 1e-14);
    }

    #[test]
    fn policy_gap_at_optimum_and_under_perturbation() {
        let mdp = random_mdp(21, 5, 3, 0.9, 3).unwrap();
        let oracle = Oracle::solve(&mdp, ORACLE_TOL).unwrap();
        assert!(policy_gap(&mdp, &oracle.q_star, &oracle.q_star).unwrap() <= 1e-9);
        // Same argmax per state, different values.
        let perturbed = QTable::from_fn(5, 3, |s, a| 2.0 * oracle.q_star.get(s, a) + s as f64);
        assert!(policy_gap(&mdp, &perturbed, &oracle.q_star).unwrap() <= 1e-9);
    }

    #[test]
    fn policy_gap_hand_solved() {
        // Two states, two actions, self loops under action 0, swap under action 1.
        // r(0,0)=1, r(0,1)=0, r(1,0)=0, r(1,1)=0.5, gamma=0.5.
        // Optimal: V*(0) = 2 (stay), V*(1) = 0.5 + 0.5*2 = 1.5 (move to 0).
        // Greedy policy staying in both states: V(0) = 2, V(1) = 0.
        let p = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let mdp = TabularMdp::new(2, 2, 0.5, p, vec![1.0, 0.0, 0.0, 0.5]).unwrap();
        let oracle = Oracle::solve(&mdp, ORACLE_TOL).unwrap();
        assert!((oracle.v_star[0] - 2.0).abs() <= 1e-10);
        assert!((oracle.v_star[1] - 1.5).abs() <= 1e-10);
        let wrong = QTable::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let gap = policy_gap(&mdp, &wrong, &oracle.q_star).unwrap();
        assert!((gap - 1.5).abs() <= 1e-9, "{gap}");
    }

    #[test]
    fn mean_se_basic() {
        let m = MeanSe::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() <= 1e-15);
        assert_eq!(MeanSe::of(&[3.0]).se, 0.0);
    }

    proptest! {
        #[test]
        fn norm_orderings(xs in proptest::collection::vec(-10.0f64..10.0, 6), ws in proptest::collection::vec(0.05f64..1.0, 6)) {
            let total: f64 = ws.iter().sum();
            let rows: Vec<Vec<f64>> = ws.chunks(2).map(|r| r.iter().map(|w| w / total).collect()).collect();
            let d = make_distribution(&rows).unwrap();
            let x = QTable::from_vec(3, 2, xs).unwrap();
            let n = norms(&x, &QTable::zeros(3, 2), &d).unwrap();
            let tol = 1e-12 * n.l2_sq.max(1.0);
            prop_assert!(d.c_min() * n.l2_sq <= n.d_sq + tol);
            prop_assert!(n.d_sq <= d.l_max() * n.l2_sq + tol);
            prop_assert!(n.inf <= n.l2() + 1e-12);
            prop_assert!(n.l2() <= 6f64.sqrt() * n.inf + 1e-12);
        }

        #[test]
        fn policy_gap_invariant_to_state_shifts(seed in 0u64..500, shifts in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let mdp = random_mdp(seed, 4, 2, 0.8, 2).unwrap();
            let oracle = Oracle::solve(&mdp, ORACLE_TOL).unwrap();
            let mut rng = stream_rng(seed, 3);
            let q = QTable::from_fn(4, 2, |_, _| rng.random_range(-3.0..3.0));
            let shifted = QTable::from_fn(4, 2, |s, a| q.get(s, a) + shifts[s]);
            let a = policy_gap(&mdp, &q, &oracle.q_star).unwrap();
            let b = policy_gap(&mdp, &shifted, &oracle.q_star).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
