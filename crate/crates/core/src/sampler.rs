use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{SamplingDistribution, TabularMdp};
use crate::sgd::TransitionSample;

/// Draws i.i.d. transitions: `(s, a) ~ d`, then `s' ~ P_a(s, .)`.
#[derive(Debug, Clone)]
pub struct TransitionSampler {
    num_actions: usize,
    pairs: WeightedIndex<f64>,
    rows: Vec<WeightedIndex<f64>>,
    rewards: Vec<f64>,
}

impl TransitionSampler {
    pub fn new(mdp: &TabularMdp, d: &SamplingDistribution) -> Result<Self> {
        if !mdp.same_shape(d.num_states(), d.num_actions()) {
            return Err(Error::shape(
                format!("{}x{} distribution", mdp.num_states(), mdp.num_actions()),
                format!("{}x{}", d.num_states(), d.num_actions()),
            ));
        }
        let pairs = WeightedIndex::new(d.probs().iter().copied())
            .map_err(|e| Error::Distribution(e.to_string()))?;
        let mut rows = Vec::with_capacity(mdp.num_pairs());
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                let row = WeightedIndex::new(mdp.transition_row(s, a).iter().copied()).map_err(|e| {
                    Error::Distribution(format!("transition row ({s},{a}): {e}"))
                })?;
                rows.push(row);
            }
        }
        Ok(Self {
            num_actions: mdp.num_actions(),
            pairs,
            rows,
            rewards: mdp.rewards().to_vec(),
        })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TransitionSample {
        let pair = self.pairs.sample(rng);
        let next_state = self.rows[pair].sample(rng);
        TransitionSample {
            state: pair / self.num_actions,
            action: pair % self.num_actions,
            next_state,
            reward: self.rewards[pair],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_distribution, random_mdp};
    use crate::seed::stream_rng;

    #[test]
    fn empirical_frequencies_match_model() {
        let mdp = random_mdp(4, 3, 2, 0.9, 3).unwrap();
        let d = make_distribution(&[vec![0.1, 0.2], vec![0.05, 0.15], vec![0.3, 0.2]]).unwrap();
        let sampler = TransitionSampler::new(&mdp, &d).unwrap();
        let mut rng = stream_rng(1, 1);
        let n = 400_000;
        let mut counts = [0usize; 3 * 2 * 3];
        for _ in 0..n {
            let x = sampler.sample(&mut rng);
            assert_eq!(x.reward, mdp.reward(x.state, x.action));
            counts[(x.state * 2 + x.action) * 3 + x.next_state] += 1;
        }
        for s in 0..3 {
            for a in 0..2 {
                for s2 in 0..3 {
                    let p = d.prob(s, a) * mdp.transition(a, s, s2);
                    let freq = counts[(s * 2 + a) * 3 + s2] as f64 / n as f64;
                    let sd = (p * (1.0 - p) / n as f64).sqrt();
                    assert!((freq - p).abs() <= 5.0 * sd + 1e-12, "({s},{a},{s2}): {freq} vs {p}");
                }
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let mdp = random_mdp(4, 3, 2, 0.9, 3).unwrap();
        let d = SamplingDistribution::uniform(2, 2).unwrap();
        assert!(TransitionSampler::new(&mdp, &d).is_err());
    }
}
