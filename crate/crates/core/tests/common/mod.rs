//! Shared generators for the integration suites: seeded, interior, and
//! deliberately boring so failures reproduce exactly.

use belief_market::{Agent, BehaviorSpec, BeliefVector, MarketSpec, OutcomeSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random point of the simplex bounded away from the boundary: an
/// exponential draw normalized, mixed with the uniform distribution.
pub fn interior_simplex(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len)
        .map(|_| -(rng.random::<f64>().max(1e-12)).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    let mix = 0.2;
    raw.into_iter()
        .map(|x| (1.0 - mix) * x / sum + mix / len as f64)
        .collect()
}

pub fn random_wealth(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.1..4.0)
}

/// A homogeneous full-scope market with random wealths and interior beliefs.
pub fn random_market(
    rng: &mut ChaCha8Rng,
    behavior: BehaviorSpec,
    num_agents: usize,
    num_goods: usize,
) -> MarketSpec {
    let space = OutcomeSpace::flat(num_goods).unwrap();
    let agents = (0..num_agents)
        .map(|i| {
            Agent::full(
                format!("a{i}"),
                random_wealth(rng),
                behavior.clone(),
                BeliefVector::new(interior_simplex(rng, num_goods)).unwrap(),
            )
        })
        .collect();
    MarketSpec::new(space, agents)
}
