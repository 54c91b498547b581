//! Belief aggregation through prediction markets.
//!
//! An ensemble of probabilistic agents is modelled as a market over
//! winner-take-all contracts, one per outcome. Each agent's wealth, belief,
//! and behavior (a utility family or a direct betting function) determine
//! its demand at any price; the equilibrium price vector is the aggregated
//! distribution. Homogeneous markets recover familiar pooling shapes
//! (wealth-weighted averages, normalized geometric means), the numeric
//! solver handles everything else, and wealth training turns labeled data
//! into posterior-like agent weights.

pub mod behavior;
pub mod equilibrium;
pub mod marginal;
pub mod market;
pub mod pools;
pub mod training;

pub use behavior::{
    demand, demand_jacobian_check, proportion, utility_value, BehaviorError, BehaviorKind,
    BehaviorSpec, ProportionVector, DEFAULT_AGGRESSIVE_EPSILON,
};
pub use equilibrium::{
    equilibrium_score, excess_demand, solve_analytic, solve_isoelastic, solve_numeric,
    solve_parimutuel, EquilibriumResult, Method, SolveError, SolverConfig,
};
pub use marginal::{
    expand_stockholding, marginal_demand, marginal_price, MarginalError, SubspaceBelief,
};
pub use market::{
    validate_market, Agent, BeliefVector, MarketError, MarketSpec, OutcomeSpace, PriceVector,
    Scope, StockholdingVector, Variable, BELIEF_SUM_TOLERANCE, MAX_GOODS, PRICE_SUM_TOLERANCE,
};
pub use pools::{gated_pool, product_pool, weighted_average_pool, PoolError, PoolInput};
pub use training::{
    bayesian_posterior, train_batch, train_online, TrainingError, TrainingInstance, WealthTrace,
};
