//! The fixed 5-state, 3-action instance used by the convergence checks.

use periodic_q::mdp::{random_mdp, SamplingDistribution, TabularMdp};
use periodic_q::seed::{stream_rng, STREAM_INIT};
use periodic_q::QTable;
use rand::Rng;

pub const NUM_STATES: usize = 5;
pub const NUM_ACTIONS: usize = 3;
pub const GAMMA: f64 = 0.9;
/// Generator seed of the instance.
pub const MDP_SEED: u64 = 1;

/// Dense 5x3 instance: every transition row has full support.
pub fn benchmark_mdp() -> TabularMdp {
    random_mdp(MDP_SEED, NUM_STATES, NUM_ACTIONS, GAMMA, NUM_STATES)
        .expect("benchmark parameters are valid")
}

pub fn benchmark_distribution() -> SamplingDistribution {
    SamplingDistribution::uniform(NUM_STATES, NUM_ACTIONS).expect("non-empty shape")
}

/// Table with entries i.i.d. uniform on `[-scale, scale)`.
pub fn uniform_table(num_states: usize, num_actions: usize, scale: f64, seed: u64) -> QTable {
    let mut rng = stream_rng(seed, STREAM_INIT);
    QTable::from_fn(num_states, num_actions, |_, _| {
        if scale > 0.0 {
            rng.random_range(-scale..scale)
        } else {
            0.0
        }
    })
}
