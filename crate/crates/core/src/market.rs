//! Core market types: outcome spaces, beliefs, prices, stockholdings, agents.
//!
//! Everything here is immutable after construction; mutation happens by
//! building new values, so concurrent readers are always safe. The heavier
//! machinery (demand functions, solvers, training) lives in the sibling
//! modules and only consumes these types.

use std::ops::Deref;

use thiserror::Error;

use crate::behavior::{BehaviorKind, BehaviorSpec};
use crate::marginal::{subspace_outcome_count, SubspaceBelief};

/// Hard cap on the enumerated outcome count. Factored spaces grow
/// multiplicatively and are enumerated explicitly, so anything past this
/// is refused at construction.
pub const MAX_GOODS: usize = 1 << 20;

/// Input beliefs may be off the simplex by rounding noise up to this much;
/// they are renormalized once at construction.
pub const BELIEF_SUM_TOLERANCE: f64 = 1e-12;

/// Prices are solver outputs and may sit off the simplex by solver error.
pub const PRICE_SUM_TOLERANCE: f64 = 1e-9;

/// Clamp applied to probabilities inside logarithms only; stored data is
/// never clamped.
pub(crate) const LOG_CLAMP: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("outcome space must declare at least one variable")]
    EmptySpace,
    #[error("variable {name} has cardinality {cardinality}, need at least 2")]
    BadCardinality { name: String, cardinality: usize },
    #[error("duplicate variable name {0}")]
    DuplicateVariable(String),
    #[error("outcome space has {0} goods, exceeding the cap of {MAX_GOODS}")]
    TooManyGoods(usize),
    #[error("assignment has {got} values, space has {expected} variables")]
    AssignmentLength { got: usize, expected: usize },
    #[error("value {value} out of range for variable {name} (cardinality {cardinality})")]
    ValueOutOfRange {
        name: String,
        value: usize,
        cardinality: usize,
    },
    #[error("good index {index} out of range ({num_goods} goods)")]
    GoodOutOfRange { index: usize, num_goods: usize },
    #[error("probability vector is empty")]
    EmptyVector,
    #[error("entry {index} is {value}, must be a finite nonnegative probability")]
    BadProbability { index: usize, value: f64 },
    #[error("entries sum to {sum}, not 1 within tolerance {tolerance}")]
    NotNormalized { sum: f64, tolerance: f64 },
    #[error("stockholding entry {index} is not finite")]
    NonFiniteShare { index: usize },
}

/// One discrete variable of a factored outcome space.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub cardinality: usize,
}

/// The finite set of mutually exclusive outcomes traded as goods.
///
/// Goods enumerate the joint assignments of all variables in lexicographic
/// order, with the first declared variable most significant. A single
/// variable yields one good per outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSpace {
    variables: Vec<Variable>,
    num_goods: usize,
}

impl OutcomeSpace {
    pub fn new<S: Into<String>>(variables: Vec<(S, usize)>) -> Result<Self, MarketError> {
        let variables: Vec<Variable> = variables
            .into_iter()
            .map(|(name, cardinality)| Variable {
                name: name.into(),
                cardinality,
            })
            .collect();
        if variables.is_empty() {
            return Err(MarketError::EmptySpace);
        }
        let mut num_goods = 1usize;
        for v in &variables {
            if v.cardinality < 2 {
                return Err(MarketError::BadCardinality {
                    name: v.name.clone(),
                    cardinality: v.cardinality,
                });
            }
            if variables.iter().filter(|w| w.name == v.name).count() > 1 {
                return Err(MarketError::DuplicateVariable(v.name.clone()));
            }
            num_goods = num_goods
                .checked_mul(v.cardinality)
                .filter(|&n| n <= MAX_GOODS)
                .ok_or(MarketError::TooManyGoods(usize::MAX))?;
        }
        Ok(Self {
            variables,
            num_goods,
        })
    }

    /// A space with a single variable named `outcome`, one good per value.
    pub fn flat(num_outcomes: usize) -> Result<Self, MarketError> {
        Self::new(vec![("outcome", num_outcomes)])
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn num_goods(&self) -> usize {
        self.num_goods
    }

    /// Lexicographic index of a full assignment, first variable most
    /// significant. Bijective with assignments.
    pub fn good_index(&self, assignment: &[usize]) -> Result<usize, MarketError> {
        if assignment.len() != self.variables.len() {
            return Err(MarketError::AssignmentLength {
                got: assignment.len(),
                expected: self.variables.len(),
            });
        }
        let mut index = 0usize;
        for (v, &value) in self.variables.iter().zip(assignment) {
            if value >= v.cardinality {
                return Err(MarketError::ValueOutOfRange {
                    name: v.name.clone(),
                    value,
                    cardinality: v.cardinality,
                });
            }
            index = index * v.cardinality + value;
        }
        Ok(index)
    }

    /// Inverse of [`good_index`](Self::good_index).
    pub fn assignment_of(&self, good: usize) -> Result<Vec<usize>, MarketError> {
        if good >= self.num_goods {
            return Err(MarketError::GoodOutOfRange {
                index: good,
                num_goods: self.num_goods,
            });
        }
        let mut assignment = vec![0usize; self.variables.len()];
        let mut rest = good;
        for (slot, v) in assignment.iter_mut().zip(&self.variables).rev() {
            *slot = rest % v.cardinality;
            rest /= v.cardinality;
        }
        Ok(assignment)
    }

    pub(crate) fn variable_position(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }
}

fn check_probabilities(values: &[f64], tolerance: f64) -> Result<f64, MarketError> {
    if values.is_empty() {
        return Err(MarketError::EmptyVector);
    }
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(MarketError::BadProbability { index, value });
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > tolerance {
        return Err(MarketError::NotNormalized { sum, tolerance });
    }
    Ok(sum)
}

/// An agent's probability distribution over outcomes (full space or a
/// subspace). Entries are nonnegative and sum to 1; inputs within the
/// rounding tolerance are renormalized exactly once here.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, MarketError> {
        let sum = check_probabilities(&probabilities, BELIEF_SUM_TOLERANCE)?;
        let mut probabilities = probabilities;
        for p in &mut probabilities {
            *p /= sum;
        }
        Ok(Self(probabilities))
    }

    /// Wraps values without validation. For staging inputs that will go
    /// through [`validate_market`]; invalid contents surface there.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for BeliefVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Current or equilibrium prices: one entry per good, a point on the
/// probability simplex within solver tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(prices: Vec<f64>) -> Result<Self, MarketError> {
        check_probabilities(&prices, PRICE_SUM_TOLERANCE)?;
        Ok(Self(prices))
    }

    /// Scales a nonnegative vector onto the simplex; for solver iterates.
    pub fn normalized(values: Vec<f64>) -> Result<Self, MarketError> {
        let mut values = values;
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(MarketError::BadProbability { index, value });
            }
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(MarketError::NotNormalized {
                sum,
                tolerance: PRICE_SUM_TOLERANCE,
            });
        }
        for v in &mut values {
            *v /= sum;
        }
        Ok(Self(values))
    }

    pub fn uniform(num_goods: usize) -> Self {
        Self(vec![1.0 / num_goods as f64; num_goods])
    }

    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for PriceVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Signed contract quantities per good; negative entries are sales.
#[derive(Debug, Clone, PartialEq)]
pub struct StockholdingVector(Vec<f64>);

impl StockholdingVector {
    pub fn new(shares: Vec<f64>) -> Result<Self, MarketError> {
        for (index, &s) in shares.iter().enumerate() {
            if !s.is_finite() {
                return Err(MarketError::NonFiniteShare { index });
            }
        }
        Ok(Self(shares))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Inner product with prices: the net cost of the holding.
    pub fn cost(&self, prices: &PriceVector) -> f64 {
        self.0.iter().zip(prices.iter()).map(|(s, c)| s * c).sum()
    }
}

impl Deref for StockholdingVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// What an agent's belief ranges over: the whole outcome space or a
/// subspace of the variables.
#[derive(Debug, Clone, PartialEq)]
pub enum Scope {
    Full(BeliefVector),
    Marginal(SubspaceBelief),
}

/// A market participant: wealth plus a belief and a behavior that together
/// determine its demand at any price.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub wealth: f64,
    pub behavior: BehaviorSpec,
    pub scope: Scope,
}

impl Agent {
    pub fn full(
        id: impl Into<String>,
        wealth: f64,
        behavior: BehaviorSpec,
        belief: BeliefVector,
    ) -> Self {
        Self {
            id: id.into(),
            wealth,
            behavior,
            scope: Scope::Full(belief),
        }
    }

    pub fn marginal(
        id: impl Into<String>,
        wealth: f64,
        behavior: BehaviorSpec,
        belief: SubspaceBelief,
    ) -> Self {
        Self {
            id: id.into(),
            wealth,
            behavior,
            scope: Scope::Marginal(belief),
        }
    }

    pub fn is_full_scope(&self) -> bool {
        matches!(self.scope, Scope::Full(_))
    }

    /// The full-space belief, if this agent has one.
    pub fn full_belief(&self) -> Option<&BeliefVector> {
        match &self.scope {
            Scope::Full(b) => Some(b),
            Scope::Marginal(_) => None,
        }
    }
}

/// An outcome space together with the agents trading on it.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub space: OutcomeSpace,
    pub agents: Vec<Agent>,
}

impl MarketSpec {
    pub fn new(space: OutcomeSpace, agents: Vec<Agent>) -> Self {
        Self { space, agents }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn total_wealth(&self) -> f64 {
        self.agents.iter().map(|a| a.wealth).sum()
    }

    /// The shared behavior kind if every agent has the same one.
    pub fn common_kind(&self) -> Option<BehaviorKind> {
        let first = self.agents.first()?.behavior.kind();
        self.agents
            .iter()
            .all(|a| a.behavior.kind() == first)
            .then_some(first)
    }

    pub fn all_full_scope(&self) -> bool {
        self.agents.iter().all(Agent::is_full_scope)
    }

    /// Renormalizes every belief table in place of the rounding noise the
    /// input may carry. Applied exactly once at load; assumes the spec has
    /// already passed [`validate_market`].
    pub fn normalized(&self) -> MarketSpec {
        let agents = self
            .agents
            .iter()
            .map(|a| {
                let scope = match &a.scope {
                    Scope::Full(b) => Scope::Full(renormalize(b)),
                    Scope::Marginal(sb) => Scope::Marginal(SubspaceBelief::from_raw(
                        sb.variables().to_vec(),
                        renormalize(sb.table()),
                    )),
                };
                Agent {
                    id: a.id.clone(),
                    wealth: a.wealth,
                    behavior: a.behavior.clone(),
                    scope,
                }
            })
            .collect();
        MarketSpec {
            space: self.space.clone(),
            agents,
        }
    }
}

fn renormalize(belief: &BeliefVector) -> BeliefVector {
    let sum: f64 = belief.iter().sum();
    BeliefVector::from_raw(belief.iter().map(|p| p / sum).collect())
}

/// Checks every type invariant of a market spec and returns one description
/// per violation, each naming the offending agent or field. An empty list
/// means the spec is well formed.
pub fn validate_market(spec: &MarketSpec) -> Vec<String> {
    let mut violations = Vec::new();
    let num_goods = spec.space.num_goods();

    if spec.agents.is_empty() {
        violations.push("market has no agents".to_string());
        return violations;
    }

    let mut has_betting = false;
    let mut has_utility = false;
    for agent in &spec.agents {
        let id = &agent.id;
        if !agent.wealth.is_finite() {
            violations.push(format!("wealth of {id} is not finite"));
        } else if agent.wealth < 0.0 {
            violations.push(format!("wealth of {id} negative"));
        }

        if agent.behavior.is_betting() {
            has_betting = true;
        } else {
            has_utility = true;
        }
        match &agent.behavior {
            BehaviorSpec::IsoelasticUtility { eta } => {
                if !eta.is_finite() || *eta <= 0.0 {
                    violations.push(format!("eta of {id} must be positive, got {eta}"));
                }
            }
            BehaviorSpec::AggressiveBet { epsilon } => {
                if !epsilon.is_finite() || *epsilon <= 0.0 || *epsilon > 1.0 {
                    violations.push(format!("epsilon of {id} must lie in (0, 1], got {epsilon}"));
                }
            }
            _ => {}
        }

        let (table, expected_len, what): (&[f64], usize, &str) = match &agent.scope {
            Scope::Full(b) => (b, num_goods, "belief"),
            Scope::Marginal(sb) => {
                match subspace_outcome_count(&spec.space, sb.variables()) {
                    Ok(count) => (sb.table(), count, "subspace belief"),
                    Err(e) => {
                        violations.push(format!("subspace of {id} invalid: {e}"));
                        continue;
                    }
                }
            }
        };
        if table.len() != expected_len {
            violations.push(format!(
                "{what} of {id} has {} entries, scope has {expected_len} outcomes",
                table.len()
            ));
            continue;
        }
        let mut entries_ok = true;
        for (k, &p) in table.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                violations.push(format!("{what} of {id} has invalid entry {p} at {k}"));
                entries_ok = false;
            }
        }
        if entries_ok {
            let sum: f64 = table.iter().sum();
            if (sum - 1.0).abs() > BELIEF_SUM_TOLERANCE {
                violations.push(format!("{what} of {id} does not sum to 1 (sum {sum})"));
            }
        }
    }

    if has_betting && has_utility {
        violations.push("market mixes betting and utility behaviors".to_string());
    }

    let wealth_proportional = spec
        .agents
        .iter()
        .any(|a| a.behavior.kind() != BehaviorKind::ExpUtility);
    if wealth_proportional && !spec.agents.iter().any(|a| a.wealth > 0.0) {
        violations.push("no agent has strictly positive wealth".to_string());
    }

    violations
}
