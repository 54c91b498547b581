//! Cross-cutting solver invariants: consensus fixed points, agent
//! permutation and wealth-scale invariance, numeric/analytic agreement,
//! and full-subspace marginal consistency.

mod common;

use belief_market::{
    equilibrium_score, excess_demand, solve_analytic, solve_isoelastic, solve_numeric,
    solve_parimutuel, Agent, BehaviorSpec, BeliefVector, MarketSpec, OutcomeSpace, SolverConfig,
    SubspaceBelief,
};
use common::{interior_simplex, random_market, rng};
use rand::Rng;

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn assert_result_invariants(spec: &MarketSpec, prices: &[f64], tolerance: f64) {
    let sum: f64 = prices.iter().sum();
    assert!((sum - 1.0).abs() < 1e-9, "prices off simplex: sum {sum}");
    assert!(prices.iter().all(|&c| c >= 0.0));
    let pv = belief_market::PriceVector::from_raw(prices.to_vec());
    let excess = excess_demand(spec, &pv).unwrap();
    let norm = excess.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(
        norm < tolerance.sqrt(),
        "excess demand norm {norm} at tolerance {tolerance}"
    );
}

#[test]
fn consensus_fixed_point_for_every_solver() {
    let mut rng = rng(11);
    for round in 0..20 {
        let n = rng.random_range(2..6);
        let shared = interior_simplex(&mut rng, n);
        let wealths: Vec<f64> = (0..rng.random_range(1..5))
            .map(|_| rng.random_range(0.2..3.0))
            .collect();
        let build = |behavior: BehaviorSpec| {
            let space = OutcomeSpace::flat(n).unwrap();
            let agents = wealths
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    Agent::full(
                        format!("a{i}"),
                        w,
                        behavior.clone(),
                        BeliefVector::new(shared.clone()).unwrap(),
                    )
                })
                .collect();
            MarketSpec::new(space, agents)
        };

        let log = solve_analytic(&build(BehaviorSpec::LogUtility)).unwrap();
        assert!(max_gap(&log.prices, &shared) < 1e-12, "round {round}");

        let exp = solve_analytic(&build(BehaviorSpec::ExpUtility)).unwrap();
        assert!(max_gap(&exp.prices, &shared) < 1e-12);

        let constant = solve_parimutuel(
            &build(BehaviorSpec::ConstantBet),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(max_gap(&constant.prices, &shared) < 1e-12);

        let tight = SolverConfig {
            tolerance: 1e-20,
            ..SolverConfig::default()
        };
        let eta = rng.random_range(0.6..3.5);
        let iso = solve_isoelastic(&build(BehaviorSpec::IsoelasticUtility { eta }), &tight)
            .unwrap();
        assert!(
            max_gap(&iso.prices, &shared) < 1e-8,
            "round {round} eta {eta} gap {}",
            max_gap(&iso.prices, &shared)
        );

        let numeric = solve_numeric(&build(BehaviorSpec::LogUtility), &tight).unwrap();
        assert!(max_gap(&numeric.prices, &shared) < 1e-8);
    }
}

#[test]
fn shuffling_agents_never_moves_prices() {
    let mut rng = rng(23);
    for _ in 0..20 {
        let n = rng.random_range(2..7);
        let spec = random_market(&mut rng, BehaviorSpec::LogUtility, 5, n);
        let mut reversed_agents = spec.agents.clone();
        reversed_agents.reverse();
        let reversed = MarketSpec::new(spec.space.clone(), reversed_agents);

        let a = solve_analytic(&spec).unwrap();
        let b = solve_analytic(&reversed).unwrap();
        assert!(max_gap(&a.prices, &b.prices) < 1e-12);

        let na = solve_numeric(&spec, &SolverConfig::default()).unwrap();
        let nb = solve_numeric(&reversed, &SolverConfig::default()).unwrap();
        assert!(max_gap(&na.prices, &nb.prices) < 1e-9);
    }
}

#[test]
fn wealth_scaling_preserves_equilibria() {
    let mut rng = rng(37);
    for _ in 0..10 {
        let n = rng.random_range(2..6);
        let factor = rng.random_range(1.5..20.0);
        let scale = |spec: &MarketSpec| {
            let agents = spec
                .agents
                .iter()
                .map(|a| Agent {
                    wealth: a.wealth * factor,
                    ..a.clone()
                })
                .collect();
            MarketSpec::new(spec.space.clone(), agents)
        };

        let log = random_market(&mut rng, BehaviorSpec::LogUtility, 4, n);
        let base = solve_analytic(&log).unwrap();
        let scaled = solve_analytic(&scale(&log)).unwrap();
        assert!(max_gap(&base.prices, &scaled.prices) < 1e-12);

        let constant = random_market(&mut rng, BehaviorSpec::ConstantBet, 4, n);
        let base = solve_parimutuel(&constant, &SolverConfig::default()).unwrap();
        let scaled = solve_parimutuel(&scale(&constant), &SolverConfig::default()).unwrap();
        assert!(max_gap(&base.prices, &scaled.prices) < 1e-12);

        // Fixed-point runs terminate on the wealth-scaled score, so compare
        // at a tolerance tight enough to pin both runs to the root.
        let eta = rng.random_range(0.8..3.0);
        let iso = random_market(
            &mut rng,
            BehaviorSpec::IsoelasticUtility { eta },
            4,
            n,
        );
        let tight = SolverConfig {
            tolerance: 1e-22,
            ..SolverConfig::default()
        };
        let base = solve_isoelastic(&iso, &tight).unwrap();
        let scaled = solve_isoelastic(&scale(&iso), &tight).unwrap();
        assert!(
            max_gap(&base.prices, &scaled.prices) < 1e-6,
            "gap {}",
            max_gap(&base.prices, &scaled.prices)
        );
    }
}

#[test]
fn numeric_agrees_with_analytic_on_homogeneous_markets() {
    let mut rng = rng(53);
    for round in 0..40 {
        let num_agents = rng.random_range(1..7);
        let num_goods = rng.random_range(2..9);
        let behavior = if round % 2 == 0 {
            BehaviorSpec::LogUtility
        } else {
            BehaviorSpec::ExpUtility
        };
        let spec = random_market(&mut rng, behavior, num_agents, num_goods);
        let analytic = solve_analytic(&spec).unwrap();
        // Solving past the required score leaves slack for poorly
        // conditioned low-wealth markets, where a 1e-10 residual can still
        // sit several 1e-6 away in price space.
        let tight = SolverConfig {
            tolerance: 1e-18,
            ..SolverConfig::default()
        };
        let numeric = solve_numeric(&spec, &tight).unwrap();
        assert!(
            max_gap(&analytic.prices, &numeric.prices) < 1e-6,
            "round {round} gap {}",
            max_gap(&analytic.prices, &numeric.prices)
        );
        assert!(numeric.score < 1e-10);
        assert_result_invariants(&spec, &numeric.prices, 1e-10);
        assert_result_invariants(&spec, &analytic.prices, 1e-10);
    }
}

#[test]
fn full_subspace_marginal_agents_match_full_scope() {
    let mut rng = rng(71);
    for round in 0..15 {
        let cards = [rng.random_range(2..4), rng.random_range(2..4)];
        let space = OutcomeSpace::new(vec![("u", cards[0]), ("v", cards[1])]).unwrap();
        let n = space.num_goods();
        let num_agents = rng.random_range(1..5);
        let behaviors = [BehaviorSpec::LogUtility, BehaviorSpec::ExpUtility];
        let behavior = behaviors[round % 2].clone();

        let mut full_agents = Vec::new();
        let mut marginal_agents = Vec::new();
        for i in 0..num_agents {
            let wealth = rng.random_range(0.2..3.0);
            let belief = interior_simplex(&mut rng, n);
            full_agents.push(Agent::full(
                format!("a{i}"),
                wealth,
                behavior.clone(),
                BeliefVector::new(belief.clone()).unwrap(),
            ));
            marginal_agents.push(Agent::marginal(
                format!("a{i}"),
                wealth,
                behavior.clone(),
                SubspaceBelief::new(
                    vec!["u".to_string(), "v".to_string()],
                    BeliefVector::new(belief).unwrap(),
                )
                .unwrap(),
            ));
        }
        let full = MarketSpec::new(space.clone(), full_agents);
        let marginal = MarketSpec::new(space, marginal_agents);
        let a = solve_numeric(&full, &SolverConfig::default()).unwrap();
        let b = solve_numeric(&marginal, &SolverConfig::default()).unwrap();
        assert!(
            max_gap(&a.prices, &b.prices) < 1e-8,
            "round {round} gap {}",
            max_gap(&a.prices, &b.prices)
        );
    }
}

#[test]
fn mixed_scope_market_clears_to_zero_excess() {
    let mut rng = rng(97);
    let space = OutcomeSpace::new(vec![("u", 2), ("v", 3)]).unwrap();
    let full_belief = interior_simplex(&mut rng, 6);
    let sub_belief = interior_simplex(&mut rng, 3);
    let spec = MarketSpec::new(
        space,
        vec![
            Agent::full(
                "whole",
                1.2,
                BehaviorSpec::LogUtility,
                BeliefVector::new(full_belief).unwrap(),
            ),
            Agent::marginal(
                "part",
                0.8,
                BehaviorSpec::IsoelasticUtility { eta: 1.6 },
                SubspaceBelief::new(
                    vec!["v".to_string()],
                    BeliefVector::new(sub_belief).unwrap(),
                )
                .unwrap(),
            ),
        ],
    );
    let result = solve_numeric(&spec, &SolverConfig::default()).unwrap();
    assert!(result.score < 1e-10);
    let check = equilibrium_score(&spec, &result.prices).unwrap();
    assert!(check < 1e-10);
}
