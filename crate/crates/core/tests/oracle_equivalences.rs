//! Market prices against the closed-form opinion pools, and wealth
//! training against the Bayesian posterior. The pools never touch the
//! solver code, so agreement is a real cross-check.

mod common;

use belief_market::{
    bayesian_posterior, gated_pool, product_pool, solve_analytic, solve_parimutuel,
    train_batch, train_online, weighted_average_pool, Agent, BehaviorSpec, BeliefVector,
    MarketSpec, OutcomeSpace, PoolInput, SolverConfig, TrainingInstance,
};
use common::{interior_simplex, random_market, rng};
use rand::Rng;

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn log_market_prices_equal_weighted_average_pool() {
    let mut rng = rng(101);
    for _ in 0..50 {
        let num_agents = rng.random_range(1..7);
        let num_goods = rng.random_range(2..9);
        let spec = random_market(&mut rng, BehaviorSpec::LogUtility, num_agents, num_goods);
        let market = solve_analytic(&spec).unwrap();
        let pool = weighted_average_pool(&PoolInput::new(
            spec.agents
                .iter()
                .map(|a| a.full_belief().unwrap().clone())
                .collect(),
            spec.agents.iter().map(|a| a.wealth).collect(),
        ))
        .unwrap();
        assert!(max_gap(&market.prices, &pool) < 1e-9);
    }
}

#[test]
fn exp_market_prices_equal_product_pool() {
    let mut rng = rng(103);
    for _ in 0..50 {
        let num_agents = rng.random_range(1..7);
        let num_goods = rng.random_range(2..9);
        let spec = random_market(&mut rng, BehaviorSpec::ExpUtility, num_agents, num_goods);
        let market = solve_analytic(&spec).unwrap();
        let pool = product_pool(
            &spec
                .agents
                .iter()
                .map(|a| a.full_belief().unwrap().clone())
                .collect::<Vec<_>>(),
            1.0 / spec.agents.len() as f64,
        )
        .unwrap();
        assert!(max_gap(&market.prices, &pool) < 1e-9);
    }
}

#[test]
fn constant_bet_market_equals_weighted_average_pool() {
    let mut rng = rng(107);
    for _ in 0..25 {
        let num_agents = rng.random_range(1..7);
        let num_goods = rng.random_range(2..9);
        let spec = random_market(&mut rng, BehaviorSpec::ConstantBet, num_agents, num_goods);
        let market = solve_parimutuel(&spec, &SolverConfig::default()).unwrap();
        let pool = weighted_average_pool(&PoolInput::new(
            spec.agents
                .iter()
                .map(|a| a.full_belief().unwrap().clone())
                .collect(),
            spec.agents.iter().map(|a| a.wealth).collect(),
        ))
        .unwrap();
        assert!(max_gap(&market.prices, &pool) < 1e-12);
    }
}

#[test]
fn gate_valued_wealths_realize_the_mixture_pool() {
    let mut rng = rng(109);
    for _ in 0..25 {
        let n = rng.random_range(2..6);
        let num_experts = rng.random_range(2..6);
        let experts: Vec<BeliefVector> = (0..num_experts)
            .map(|_| BeliefVector::new(interior_simplex(&mut rng, n)).unwrap())
            .collect();
        // Gates: a fresh nonnegative weighting per instance.
        let gates: Vec<f64> = (0..experts.len())
            .map(|_| rng.random_range(0.01..1.0))
            .collect();
        let space = OutcomeSpace::flat(n).unwrap();
        let agents = experts
            .iter()
            .zip(&gates)
            .enumerate()
            .map(|(i, (belief, &gate))| {
                Agent::full(
                    format!("expert{i}"),
                    gate,
                    BehaviorSpec::LogUtility,
                    belief.clone(),
                )
            })
            .collect();
        let market = solve_analytic(&MarketSpec::new(space, agents)).unwrap();
        let pool = gated_pool(&gates, &experts).unwrap();
        assert!(max_gap(&market.prices, &pool) < 1e-9);
    }
}

fn random_dataset(
    rng: &mut rand_chacha::ChaCha8Rng,
    num_agents: usize,
    num_goods: usize,
    len: usize,
) -> Vec<TrainingInstance> {
    (0..len)
        .map(|_| {
            let beliefs = (0..num_agents)
                .map(|_| BeliefVector::new(interior_simplex(rng, num_goods)).unwrap())
                .collect();
            TrainingInstance::new(beliefs, rng.random_range(0..num_goods))
        })
        .collect()
}

#[test]
fn online_training_is_bayesian_updating() {
    let mut rng = rng(113);
    for _ in 0..30 {
        let num_agents = rng.random_range(2..6);
        let num_goods = rng.random_range(2..6);
        let prior: Vec<f64> = {
            let raw = interior_simplex(&mut rng, num_agents);
            raw
        };
        let space = OutcomeSpace::flat(num_goods).unwrap();
        let agents: Vec<Agent> = prior
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                Agent::full(
                    format!("a{i}"),
                    w,
                    BehaviorSpec::LogUtility,
                    BeliefVector::uniform(num_goods),
                )
            })
            .collect();
        let spec = MarketSpec::new(space, agents);
        let len = rng.random_range(1..21);
        let data = random_dataset(&mut rng, num_agents, num_goods, len);

        let trace = train_online(&spec, &data).unwrap();
        let initial_total: f64 = prior.iter().sum();
        for row in &trace.wealths {
            assert!((row.iter().sum::<f64>() - initial_total).abs() < 1e-10);
        }
        let final_total: f64 = trace.final_wealths().iter().sum();
        let posterior = bayesian_posterior(&prior, &data).unwrap();
        for (w, p) in trace.final_wealths().iter().zip(&posterior) {
            assert!((w / final_total - p).abs() < 1e-10);
        }
    }
}

#[test]
fn batch_training_conserves_wealth_and_prices_at_initial_wealths() {
    let mut rng = rng(127);
    for _ in 0..20 {
        let num_agents = rng.random_range(2..5);
        let num_goods = rng.random_range(2..5);
        let space = OutcomeSpace::flat(num_goods).unwrap();
        let wealths: Vec<f64> = (0..num_agents)
            .map(|_| rng.random_range(0.1..2.0))
            .collect();
        let agents: Vec<Agent> = wealths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                Agent::full(
                    format!("a{i}"),
                    w,
                    BehaviorSpec::LogUtility,
                    BeliefVector::uniform(num_goods),
                )
            })
            .collect();
        let spec = MarketSpec::new(space, agents);
        let len = rng.random_range(1..11);
        let data = random_dataset(&mut rng, num_agents, num_goods, len);
        let trace = train_batch(&spec, &data).unwrap();
        let total: f64 = wealths.iter().sum();
        for row in &trace.wealths {
            assert!((row.iter().sum::<f64>() - total).abs() < 1e-10);
        }
        // Every instance must have been priced at the initial wealths.
        for (t, instance) in data.iter().enumerate() {
            let expected: Vec<f64> = (0..num_goods)
                .map(|k| {
                    wealths
                        .iter()
                        .zip(&instance.beliefs)
                        .map(|(&w, b)| w * b[k])
                        .sum::<f64>()
                        / total
                })
                .collect();
            assert!(max_gap(&trace.prices[t], &expected) < 1e-12);
        }
    }
}
