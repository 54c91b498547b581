//! Wealth training for log-utility markets, plus the Bayesian posterior
//! the online rule is equivalent to.
//!
//! Beliefs are per-instance classifier outputs; only wealths persist across
//! instances. Each online step clears the market at the current wealths and
//! multiplies every wealth by its belief-to-price ratio at the realized
//! outcome, which conserves total wealth exactly.

use thiserror::Error;

use crate::behavior::BehaviorKind;
use crate::equilibrium::SolveError;
use crate::market::{BeliefVector, MarketSpec, PriceVector};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("training undefined for behavior {0}")]
    UnsupportedBehavior(BehaviorKind),
    #[error("agent {0} has a subspace belief; training needs full-scope agents")]
    MarginalAgent(String),
    #[error("agent {0} must start with strictly positive wealth")]
    NonPositiveWealth(String),
    #[error("instance {step}: expected {expected} belief rows, got {got}")]
    BeliefCount {
        step: usize,
        expected: usize,
        got: usize,
    },
    #[error("instance {step}: belief row {agent} has {got} entries, expected {expected}")]
    BeliefLength {
        step: usize,
        agent: usize,
        expected: usize,
        got: usize,
    },
    #[error("instance {step}: label {label} out of range ({num_goods} goods)")]
    LabelOutOfRange {
        step: usize,
        label: usize,
        num_goods: usize,
    },
    #[error("instance {step}: every agent assigned probability 0 to the realized outcome")]
    DegeneratePrice { step: usize },
    #[error("posterior vanished for every agent at instance {step}")]
    DegenerateData { step: usize },
    #[error("prior must be strictly positive and sum to 1, got sum {sum}")]
    BadPrior { sum: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// One labeled example: each agent's belief for it and the realized good.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub beliefs: Vec<BeliefVector>,
    pub label: usize,
}

impl TrainingInstance {
    pub fn new(beliefs: Vec<BeliefVector>, label: usize) -> Self {
        Self { beliefs, label }
    }
}

/// Wealth trajectory of a training run: one wealth row per step (T+1 rows
/// including the initial wealths) and the clearing prices per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthTrace {
    pub agent_ids: Vec<String>,
    /// `wealths[t]` holds every agent's wealth after `t` steps.
    pub wealths: Vec<Vec<f64>>,
    /// `prices[t]` is the equilibrium used by step `t + 1`.
    pub prices: Vec<PriceVector>,
    pub labels: Vec<usize>,
}

impl WealthTrace {
    pub fn final_wealths(&self) -> &[f64] {
        self.wealths.last().expect("trace holds initial wealths")
    }

    pub fn num_steps(&self) -> usize {
        self.wealths.len() - 1
    }
}

fn check_market(spec: &MarketSpec) -> Result<Vec<f64>, TrainingError> {
    for agent in &spec.agents {
        if agent.behavior.kind() != BehaviorKind::LogUtility {
            return Err(TrainingError::UnsupportedBehavior(agent.behavior.kind()));
        }
        if !agent.is_full_scope() {
            return Err(TrainingError::MarginalAgent(agent.id.clone()));
        }
        if !(agent.wealth > 0.0) {
            return Err(TrainingError::NonPositiveWealth(agent.id.clone()));
        }
    }
    Ok(spec.agents.iter().map(|a| a.wealth).collect())
}

fn check_instance(
    spec: &MarketSpec,
    instance: &TrainingInstance,
    step: usize,
) -> Result<(), TrainingError> {
    let num_agents = spec.agents.len();
    let num_goods = spec.space.num_goods();
    if instance.beliefs.len() != num_agents {
        return Err(TrainingError::BeliefCount {
            step,
            expected: num_agents,
            got: instance.beliefs.len(),
        });
    }
    for (agent, belief) in instance.beliefs.iter().enumerate() {
        if belief.len() != num_goods {
            return Err(TrainingError::BeliefLength {
                step,
                agent,
                expected: num_goods,
                got: belief.len(),
            });
        }
    }
    if instance.label >= num_goods {
        return Err(TrainingError::LabelOutOfRange {
            step,
            label: instance.label,
            num_goods,
        });
    }
    Ok(())
}

/// Wealth-weighted mean of the instance beliefs: the log-utility market's
/// equilibrium price at the given wealths.
fn clearing_prices(wealths: &[f64], beliefs: &[BeliefVector]) -> PriceVector {
    let total: f64 = wealths.iter().sum();
    let n = beliefs[0].len();
    let mut prices = vec![0.0; n];
    for (&w, belief) in wealths.iter().zip(beliefs) {
        for (acc, &p) in prices.iter_mut().zip(belief.iter()) {
            *acc += w * p;
        }
    }
    for c in &mut prices {
        *c /= total;
    }
    PriceVector::from_raw(prices)
}

/// Online wealth updating: after each instance, every wealth is multiplied
/// by its belief-to-price ratio at the realized outcome. Total wealth is
/// conserved at every step.
pub fn train_online(
    spec: &MarketSpec,
    data: &[TrainingInstance],
) -> Result<WealthTrace, TrainingError> {
    let mut wealths = check_market(spec)?;
    let mut trace = WealthTrace {
        agent_ids: spec.agents.iter().map(|a| a.id.clone()).collect(),
        wealths: vec![wealths.clone()],
        prices: Vec::with_capacity(data.len()),
        labels: Vec::with_capacity(data.len()),
    };
    for (step, instance) in data.iter().enumerate() {
        check_instance(spec, instance, step)?;
        let prices = clearing_prices(&wealths, &instance.beliefs);
        let price_at_label = prices[instance.label];
        if !(price_at_label > 0.0) {
            return Err(TrainingError::DegeneratePrice { step });
        }
        for (w, belief) in wealths.iter_mut().zip(&instance.beliefs) {
            *w *= belief[instance.label] / price_at_label;
        }
        trace.wealths.push(wealths.clone());
        trace.prices.push(prices);
        trace.labels.push(instance.label);
    }
    Ok(trace)
}

/// Batch wealth updating: every instance is priced at the initial wealths,
/// the initial wealth is split into one equal piece per instance, and each
/// piece is updated by its own instance. The trace interpolates by holding
/// not-yet-allocated pieces at their initial value, so row `t` shows `t`
/// allocated pieces and row `T` is the batch formula.
pub fn train_batch(
    spec: &MarketSpec,
    data: &[TrainingInstance],
) -> Result<WealthTrace, TrainingError> {
    let initial = check_market(spec)?;
    let mut trace = WealthTrace {
        agent_ids: spec.agents.iter().map(|a| a.id.clone()).collect(),
        wealths: vec![initial.clone()],
        prices: Vec::with_capacity(data.len()),
        labels: Vec::with_capacity(data.len()),
    };
    if data.is_empty() {
        return Ok(trace);
    }
    let pieces = data.len() as f64;
    let mut allocated = vec![0.0; initial.len()];
    for (step, instance) in data.iter().enumerate() {
        check_instance(spec, instance, step)?;
        let prices = clearing_prices(&initial, &instance.beliefs);
        let price_at_label = prices[instance.label];
        if !(price_at_label > 0.0) {
            return Err(TrainingError::DegeneratePrice { step });
        }
        for ((piece_sum, &w0), belief) in
            allocated.iter_mut().zip(&initial).zip(&instance.beliefs)
        {
            *piece_sum += (w0 / pieces) * belief[instance.label] / price_at_label;
        }
        let remaining = (data.len() - step - 1) as f64 / pieces;
        let row: Vec<f64> = allocated
            .iter()
            .zip(&initial)
            .map(|(done, &w0)| done + w0 * remaining)
            .collect();
        trace.wealths.push(row);
        trace.prices.push(prices);
        trace.labels.push(instance.label);
    }
    Ok(trace)
}

/// Bayesian posterior over agents: prior times the product of each agent's
/// likelihood of the realized outcomes, normalized. Renormalizes after
/// every instance so long runs cannot underflow, which leaves the result
/// unchanged.
pub fn bayesian_posterior(
    prior: &[f64],
    data: &[TrainingInstance],
) -> Result<Vec<f64>, TrainingError> {
    let sum: f64 = prior.iter().sum();
    if prior.is_empty()
        || prior.iter().any(|&p| !(p > 0.0) || !p.is_finite())
        || (sum - 1.0).abs() > 1e-9
    {
        return Err(TrainingError::BadPrior { sum });
    }
    let mut weights: Vec<f64> = prior.iter().map(|p| p / sum).collect();
    for (step, instance) in data.iter().enumerate() {
        if instance.beliefs.len() != weights.len() {
            return Err(TrainingError::BeliefCount {
                step,
                expected: weights.len(),
                got: instance.beliefs.len(),
            });
        }
        for (w, belief) in weights.iter_mut().zip(&instance.beliefs) {
            if instance.label >= belief.len() {
                return Err(TrainingError::LabelOutOfRange {
                    step,
                    label: instance.label,
                    num_goods: belief.len(),
                });
            }
            *w *= belief[instance.label];
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(TrainingError::DegenerateData { step });
        }
        for w in &mut weights {
            *w /= total;
        }
    }
    Ok(weights)
}
