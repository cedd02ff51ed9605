//! The expected inner-loop error has a closed recursion. Each pair is
//! touched with probability `d(s,a)` per step, and its error
//! `e = Q_{0,t}(s,a) - T Q_0(s,a)` then moves to `(1 - β_t) e + β_t ξ`, where
//! the zero-mean target noise `ξ` has variance `γ² Var_{s'}(V_0(s'))`. Hence
//!
//! ```text
//! E e²_{t+1} = (1 - d (2β_t - β_t²)) E e²_t + d β_t² σ²
//! ```
//!
//! and the seed average of `2 l(Q_{0,t}; Q_0)` must match `Σ d E e²_t`.

use periodic_q::bellman::apply_bellman;
use periodic_q::mdp::{make_distribution, random_mdp, SamplingDistribution, TabularMdp};
use periodic_q::metrics::MeanSe;
use periodic_q::pq::{run_pq, theory_schedule, InitQ, PqConfig, StepSchedule};
use periodic_q::seed::{derive_seed, stream_rng};
use periodic_q::QTable;
use rand::Rng;

fn exact_curve(
    mdp: &TabularMdp,
    d: &SamplingDistribution,
    q0: &QTable,
    schedule: StepSchedule,
    horizon: u64,
) -> Vec<f64> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let v0 = q0.state_values();
    let tq0 = apply_bellman(q0, mdp).unwrap();
    let mut second: Vec<f64> = Vec::with_capacity(ns * na);
    let mut noise: Vec<f64> = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let row = mdp.transition_row(s, a);
            let mean: f64 = row.iter().zip(&v0).map(|(p, v)| p * v).sum();
            let mean_sq: f64 = row.iter().zip(&v0).map(|(p, v)| p * v * v).sum();
            noise.push(mdp.gamma() * mdp.gamma() * (mean_sq - mean * mean));
            let e = q0.get(s, a) - tq0.get(s, a);
            second.push(e * e);
        }
    }
    let probs = d.probs();
    let mut curve = Vec::with_capacity(horizon as usize + 1);
    for t in 0..=horizon {
        curve.push(probs.iter().zip(&second).map(|(w, m)| w * m).sum());
        let b = schedule.step(t);
        for i in 0..second.len() {
            second[i] = (1.0 - probs[i] * (2.0 * b - b * b)) * second[i] + probs[i] * b * b * noise[i];
        }
    }
    curve
}

#[test]
fn monte_carlo_inner_error_matches_exact_recursion() {
    let mdp = random_mdp(17, 4, 3, 0.9, 3).unwrap();
    let mut rng = stream_rng(17, 9);
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..3).map(|_| rng.random_range(0.5..1.5)).collect())
        .collect();
    let total: f64 = rows.iter().flatten().sum();
    let d = make_distribution(&rows.iter().map(|r| r.iter().map(|x| x / total).collect()).collect::<Vec<_>>()).unwrap();
    let q0 = QTable::from_fn(4, 3, |_, _| rng.random_range(-5.0..5.0));
    let schedule = theory_schedule(&d);
    let horizon = 3_000;
    let exact = exact_curve(&mdp, &d, &q0, schedule, horizon);

    let seeds = 400;
    let mut cfg = PqConfig::new(1, horizon, schedule);
    cfg.init = InitQ::Table(q0);
    cfg.eval_every = 10;
    let traces: Vec<_> = (0..seeds)
        .map(|i| {
            cfg.seed = derive_seed(5, i);
            run_pq(&mdp, &d, &cfg, None).unwrap()
        })
        .collect();
    for t in [0u64, 10, 50, 200, 1000, 3000] {
        let row = (t / 10) as usize;
        let xs: Vec<f64> = traces
            .iter()
            .map(|tr| {
                assert_eq!(tr.checkpoints[row].inner_t, t);
                2.0 * tr.checkpoints[row].loss
            })
            .collect();
        let m = MeanSe::of(&xs);
        let tol = 4.0 * m.se + 1e-12 * exact[t as usize];
        assert!(
            (m.mean - exact[t as usize]).abs() <= tol,
            "t = {t}: Monte Carlo {} ± {} vs exact {}",
            m.mean,
            m.se,
            exact[t as usize]
        );
    }
}

#[test]
fn optimal_start_has_pure_noise_curve() {
    // From Q*, the first target equals the start, so only the noise term
    // remains and the error rises from zero before decaying.
    let mdp = random_mdp(3, 5, 3, 0.9, 5).unwrap();
    let d = SamplingDistribution::uniform(5, 3).unwrap();
    let q_star = periodic_q::bellman::Oracle::solve(&mdp, 1e-12).unwrap().q_star;
    let curve = exact_curve(&mdp, &d, &q_star, theory_schedule(&d), 100_000);
    assert!(curve[0] <= 1e-20);
    let peak = curve.iter().cloned().fold(0.0, f64::max);
    assert!(curve[100_000] < 0.01 * peak);
    // Far out, the curve behaves like 1/(λ + t).
    let lambda = theory_schedule(&d).lambda;
    let ratio = curve[100_000] * (lambda + 100_000.0) / (curve[50_000] * (lambda + 50_000.0));
    assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
}
