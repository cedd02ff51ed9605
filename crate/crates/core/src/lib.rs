//! Tabular periodic Q-learning.
//!
//! The crate provides finite discounted MDPs and a seeded instance generator
//! ([`mdp`]), exact Bellman oracles ([`bellman`]), the regression subproblem
//! solved in each outer iteration ([`sgd`]), the learning loop together with
//! its step-size rule and sample budgets ([`pq`]), and error functionals
//! ([`metrics`]).
//!
//! ```
//! use periodic_q::{bellman::Oracle, mdp::{random_mdp, SamplingDistribution}, pq};
//!
//! let mdp = random_mdp(7, 5, 3, 0.9, 5).unwrap();
//! let d = SamplingDistribution::uniform(5, 3).unwrap();
//! let oracle = Oracle::solve(&mdp, 1e-10).unwrap();
//! let cfg = pq::PqConfig::new(10, 2_000, pq::theory_schedule(&d));
//! let trace = pq::run_pq(&mdp, &d, &cfg, Some(&oracle)).unwrap();
//! assert!(trace.last().q_inf_error.unwrap() < trace.checkpoints[0].q_inf_error.unwrap());
//! ```

pub mod bellman;
pub mod error;
pub mod mdp;
pub mod metrics;
pub mod pq;
pub mod sampler;
pub mod seed;
pub mod sgd;
pub mod table;

pub use error::{Error, Result};
pub use table::{Policy, QTable};
