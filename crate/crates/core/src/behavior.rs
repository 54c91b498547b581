//! Agent behavior: utility families, betting proportions, and the demand
//! (buying) functions they induce.
//!
//! Utility agents maximize expected utility of wealth under the budget
//! gauge `s'c = 0`, which pins down a closed-form demand per family.
//! Betting agents instead stake a wealth fraction per good directly; their
//! clearing rule is parimutuel and lives in [`crate::equilibrium`].

use std::ops::Deref;

use thiserror::Error;

use crate::market::{Agent, BeliefVector, PriceVector, Scope, StockholdingVector, LOG_CLAMP};

/// Fallback aggressiveness when a market file leaves epsilon out.
pub const DEFAULT_AGGRESSIVE_EPSILON: f64 = 0.05;

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("{0} is not a utility behavior")]
    NotUtility(BehaviorKind),
    #[error("{0} is not a betting behavior")]
    NotBetting(BehaviorKind),
    #[error("price of good {index} is {price}; demand needs strictly positive prices")]
    SingularPrice { index: usize, price: f64 },
    #[error("agent {0} has a subspace belief; use marginal_demand")]
    MarginalScope(String),
    #[error("belief has {belief} entries but prices have {prices}")]
    LengthMismatch { belief: usize, prices: usize },
}

/// Discriminant of [`BehaviorSpec`], named as in market files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BehaviorKind {
    LogUtility,
    ExpUtility,
    IsoelasticUtility,
    ConstantBet,
    LinearBet,
    AggressiveBet,
}

impl std::fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            BehaviorKind::LogUtility => "log_utility",
            BehaviorKind::ExpUtility => "exp_utility",
            BehaviorKind::IsoelasticUtility => "isoelastic_utility",
            BehaviorKind::ConstantBet => "constant_bet",
            BehaviorKind::LinearBet => "linear_bet",
            BehaviorKind::AggressiveBet => "aggressive_bet",
        };
        f.write_str(name)
    }
}

/// How an agent turns wealth, belief, and prices into demand: a utility
/// family to maximize, or a betting function applied directly.
#[derive(Debug, Clone, PartialEq)]
pub enum BehaviorSpec {
    LogUtility,
    ExpUtility,
    IsoelasticUtility { eta: f64 },
    ConstantBet,
    LinearBet,
    AggressiveBet { epsilon: f64 },
}

impl BehaviorSpec {
    pub fn kind(&self) -> BehaviorKind {
        match self {
            BehaviorSpec::LogUtility => BehaviorKind::LogUtility,
            BehaviorSpec::ExpUtility => BehaviorKind::ExpUtility,
            BehaviorSpec::IsoelasticUtility { .. } => BehaviorKind::IsoelasticUtility,
            BehaviorSpec::ConstantBet => BehaviorKind::ConstantBet,
            BehaviorSpec::LinearBet => BehaviorKind::LinearBet,
            BehaviorSpec::AggressiveBet { .. } => BehaviorKind::AggressiveBet,
        }
    }

    pub fn is_utility(&self) -> bool {
        matches!(
            self.kind(),
            BehaviorKind::LogUtility | BehaviorKind::ExpUtility | BehaviorKind::IsoelasticUtility
        )
    }

    pub fn is_betting(&self) -> bool {
        !self.is_utility()
    }
}

/// Fraction of wealth staked per good by a betting agent, each entry in
/// [0, 1] with total at most 1 after budget rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionVector(Vec<f64>);

impl ProportionVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for ProportionVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Utility of holding wealth `x` for a utility behavior.
///
/// Log: `ln x` for positive `x`, negative infinity otherwise. Exponential:
/// `-exp(-x)`. Isoelastic: `(x^(1-eta) - 1)/(1 - eta)` with the `eta = 1`
/// case evaluated as `ln x`.
pub fn utility_value(behavior: &BehaviorSpec, x: f64) -> Result<f64, BehaviorError> {
    match behavior {
        BehaviorSpec::LogUtility => Ok(if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }),
        BehaviorSpec::ExpUtility => Ok(-(-x).exp()),
        BehaviorSpec::IsoelasticUtility { eta } => {
            if *eta == 1.0 {
                return Ok(if x > 0.0 { x.ln() } else { f64::NEG_INFINITY });
            }
            if x <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            // exp_m1 keeps the quotient stable as eta approaches 1.
            Ok(((1.0 - eta) * x.ln()).exp_m1() / (1.0 - eta))
        }
        other => Err(BehaviorError::NotUtility(other.kind())),
    }
}

/// Wealth fraction a betting agent stakes on each good at the given prices.
///
/// Constant bets stake the belief itself; linear bets scale it by `1 - c_k`;
/// aggressive bets ramp from nothing at `c_k = P(k)` to everything at
/// `c_k = P(k) - epsilon`. If the fractions total more than 1 they are
/// rescaled onto the budget.
pub fn proportion(
    behavior: &BehaviorSpec,
    belief: &BeliefVector,
    prices: &PriceVector,
) -> Result<ProportionVector, BehaviorError> {
    if belief.len() != prices.len() {
        return Err(BehaviorError::LengthMismatch {
            belief: belief.len(),
            prices: prices.len(),
        });
    }
    let fractions: Vec<f64> = match behavior {
        BehaviorSpec::ConstantBet => belief.iter().copied().collect(),
        BehaviorSpec::LinearBet => belief
            .iter()
            .zip(prices.iter())
            .map(|(p, c)| (1.0 - c).max(0.0) * p)
            .collect(),
        BehaviorSpec::AggressiveBet { epsilon } => belief
            .iter()
            .zip(prices.iter())
            .map(|(p, c)| {
                if *c <= p - epsilon {
                    1.0
                } else if *c >= *p {
                    0.0
                } else {
                    (p - c) / epsilon
                }
            })
            .collect(),
        other => return Err(BehaviorError::NotBetting(other.kind())),
    };
    let total: f64 = fractions.iter().sum();
    let fractions = if total > 1.0 {
        fractions.into_iter().map(|f| f / total).collect()
    } else {
        fractions
    };
    Ok(ProportionVector(fractions))
}

/// Demand math shared by full-scope and marginal agents: `beliefs` and
/// `prices` are aligned over whichever goods the agent trades.
pub(crate) fn demand_kernel(
    behavior: &BehaviorSpec,
    wealth: f64,
    beliefs: &[f64],
    prices: &[f64],
) -> Result<Vec<f64>, BehaviorError> {
    for (index, &price) in prices.iter().enumerate() {
        if !(price > 0.0) {
            return Err(BehaviorError::SingularPrice { index, price });
        }
    }
    match behavior {
        BehaviorSpec::LogUtility => Ok(beliefs
            .iter()
            .zip(prices)
            .map(|(p, c)| wealth * (p - c) / c)
            .collect()),
        BehaviorSpec::ExpUtility => {
            // The raw log-ratio form violates the gauge; subtracting its
            // price-weighted mean restores s'c = 0 without moving the
            // homogeneous equilibrium (the constant cancels in aggregate).
            let raw: Vec<f64> = beliefs
                .iter()
                .zip(prices)
                .map(|(p, c)| p.max(LOG_CLAMP).ln() - c.ln())
                .collect();
            let mean: f64 = raw.iter().zip(prices).map(|(r, c)| r * c).sum();
            Ok(raw.into_iter().map(|r| r - mean).collect())
        }
        BehaviorSpec::IsoelasticUtility { eta } => {
            let growth: Vec<f64> = beliefs
                .iter()
                .zip(prices)
                .map(|(p, c)| ((p.max(LOG_CLAMP).ln() - c.ln()) / eta).exp())
                .collect();
            let denom: f64 = growth.iter().zip(prices).map(|(g, c)| g * c).sum();
            Ok(growth
                .into_iter()
                .map(|g| wealth * (g / denom - 1.0))
                .collect())
        }
        other => Err(BehaviorError::NotUtility(other.kind())),
    }
}

/// The agent's demanded stockholding at the given prices.
///
/// Utility kinds get the expected-utility maximizer under the budget gauge,
/// so `demand' * prices = 0` holds exactly. Betting kinds get the wealth
/// staked per good, `W * proportion(...)`.
pub fn demand(agent: &Agent, prices: &PriceVector) -> Result<StockholdingVector, BehaviorError> {
    let belief = match &agent.scope {
        Scope::Full(b) => b,
        Scope::Marginal(_) => return Err(BehaviorError::MarginalScope(agent.id.clone())),
    };
    if agent.behavior.is_betting() {
        let fractions = proportion(&agent.behavior, belief, prices)?;
        return Ok(StockholdingVector::from_raw(
            fractions.iter().map(|f| agent.wealth * f).collect(),
        ));
    }
    if belief.len() != prices.len() {
        return Err(BehaviorError::LengthMismatch {
            belief: belief.len(),
            prices: prices.len(),
        });
    }
    demand_kernel(&agent.behavior, agent.wealth, belief, prices)
        .map(StockholdingVector::from_raw)
}

/// Certifies the analytic demand against the first-order stationarity
/// condition `P(k) U'(W + s_k) = lambda c_k`, with `U'` taken by central
/// finite differences of step `h` so the check is independent of the
/// closed forms it validates. Returns the largest deviation of the
/// per-good ratios from their mean.
pub fn demand_jacobian_check(
    agent: &Agent,
    prices: &PriceVector,
    h: f64,
) -> Result<f64, BehaviorError> {
    if !agent.behavior.is_utility() {
        return Err(BehaviorError::NotUtility(agent.behavior.kind()));
    }
    let belief = match &agent.scope {
        Scope::Full(b) => b,
        Scope::Marginal(_) => return Err(BehaviorError::MarginalScope(agent.id.clone())),
    };
    let holding = demand(agent, prices)?;
    let mut ratios = Vec::with_capacity(holding.len());
    for ((&s, &p), &c) in holding.iter().zip(belief.iter()).zip(prices.iter()) {
        let x = agent.wealth + s;
        // Step scales with |x| so the difference quotient stays accurate
        // across wealth magnitudes.
        let step = h * x.abs().max(1.0);
        let upper = utility_value(&agent.behavior, x + step)?;
        let lower = utility_value(&agent.behavior, x - step)?;
        let derivative = (upper - lower) / (2.0 * step);
        ratios.push((p / c) * derivative);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(ratios
        .iter()
        .map(|r| (r - mean).abs())
        .fold(0.0, f64::max))
}
