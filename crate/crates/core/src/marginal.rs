//! Marginal agents: beliefs on a subspace of the variables, traded as
//! bundle goods that pay on every consistent full outcome.
//!
//! A marginal good for subspace outcome `a` is the bundle of all full goods
//! projecting onto `a`; its price is the sum of their prices. Demand is
//! computed on the subspace with those bundle prices and then expanded back
//! to full-space stockholdings.

use thiserror::Error;

use crate::behavior::{demand_kernel, BehaviorError};
use crate::market::{
    Agent, BeliefVector, MarketError, OutcomeSpace, PriceVector, Scope, StockholdingVector,
};

#[derive(Debug, Error)]
pub enum MarginalError {
    #[error("subspace is empty")]
    EmptySubspace,
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("variable {0} listed twice in subspace")]
    DuplicateVariable(String),
    #[error("expected {expected} marginal entries for the subspace, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("prices cover {got} goods, space has {expected}")]
    PriceLength { expected: usize, got: usize },
    #[error("betting behavior {0} is not defined for marginal agents")]
    UnsupportedBehavior(String),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// A belief over the joint outcomes of a subset of variables.
///
/// The table enumerates the subspace outcomes lexicographically in the
/// order the variables are listed here, first variable most significant,
/// mirroring the full-space good order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBelief {
    variables: Vec<String>,
    table: BeliefVector,
}

impl SubspaceBelief {
    pub fn new<S: Into<String>>(
        variables: Vec<S>,
        table: BeliefVector,
    ) -> Result<Self, MarginalError> {
        let variables: Vec<String> = variables.into_iter().map(Into::into).collect();
        if variables.is_empty() {
            return Err(MarginalError::EmptySubspace);
        }
        for name in &variables {
            if variables.iter().filter(|n| *n == name).count() > 1 {
                return Err(MarginalError::DuplicateVariable(name.clone()));
            }
        }
        Ok(Self { variables, table })
    }

    /// Wraps parts without validation; invalid contents surface in
    /// [`crate::market::validate_market`].
    pub fn from_raw(variables: Vec<String>, table: BeliefVector) -> Self {
        Self { variables, table }
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn table(&self) -> &BeliefVector {
        &self.table
    }
}

/// Maps full-space goods onto the joint outcomes of a variable subset.
struct SubspaceIndexer {
    /// Position of each subspace variable in the full space.
    positions: Vec<usize>,
    cardinalities: Vec<usize>,
    num_outcomes: usize,
}

impl SubspaceIndexer {
    fn new(space: &OutcomeSpace, subspace: &[String]) -> Result<Self, MarginalError> {
        if subspace.is_empty() {
            return Err(MarginalError::EmptySubspace);
        }
        let mut positions = Vec::with_capacity(subspace.len());
        let mut cardinalities = Vec::with_capacity(subspace.len());
        let mut num_outcomes = 1usize;
        for name in subspace {
            if subspace.iter().filter(|n| *n == name).count() > 1 {
                return Err(MarginalError::DuplicateVariable(name.clone()));
            }
            let position = space
                .variable_position(name)
                .ok_or_else(|| MarginalError::UnknownVariable(name.clone()))?;
            positions.push(position);
            let cardinality = space.variables()[position].cardinality;
            cardinalities.push(cardinality);
            num_outcomes *= cardinality;
        }
        Ok(Self {
            positions,
            cardinalities,
            num_outcomes,
        })
    }

    fn project(&self, assignment: &[usize]) -> usize {
        let mut index = 0usize;
        for (&position, &cardinality) in self.positions.iter().zip(&self.cardinalities) {
            index = index * cardinality + assignment[position];
        }
        index
    }

    /// Subspace outcome index for every full good, in good order.
    fn projection_table(&self, space: &OutcomeSpace) -> Vec<usize> {
        (0..space.num_goods())
            .map(|good| {
                let assignment = space
                    .assignment_of(good)
                    .expect("good index within space");
                self.project(&assignment)
            })
            .collect()
    }
}

/// Number of joint outcomes of a variable subset; errors on unknown or
/// duplicated variables. Used by market validation.
pub(crate) fn subspace_outcome_count(
    space: &OutcomeSpace,
    subspace: &[String],
) -> Result<usize, MarginalError> {
    SubspaceIndexer::new(space, subspace).map(|ix| ix.num_outcomes)
}

/// Subspace outcome index of every full good plus the subspace outcome
/// count; lets the solver chain derivatives through the projection.
pub(crate) fn projection_of(
    space: &OutcomeSpace,
    subspace: &[String],
) -> Result<(Vec<usize>, usize), MarginalError> {
    let indexer = SubspaceIndexer::new(space, subspace)?;
    let table = indexer.projection_table(space);
    Ok((table, indexer.num_outcomes))
}

/// The marginal price of each subspace outcome: the sum of full prices over
/// all goods projecting onto it. Sums to whatever the full prices sum to.
pub fn marginal_price(
    space: &OutcomeSpace,
    prices: &PriceVector,
    subspace: &[String],
) -> Result<PriceVector, MarginalError> {
    if prices.len() != space.num_goods() {
        return Err(MarginalError::PriceLength {
            expected: space.num_goods(),
            got: prices.len(),
        });
    }
    let indexer = SubspaceIndexer::new(space, subspace)?;
    let projection = indexer.projection_table(space);
    let mut out = vec![0.0; indexer.num_outcomes];
    for (good, &price) in prices.iter().enumerate() {
        out[projection[good]] += price;
    }
    Ok(PriceVector::from_raw(out))
}

/// Expands per-bundle quantities to a full-space stockholding: every full
/// good inherits the shares of the bundle it belongs to. The expansion
/// preserves cost: `expanded' * prices = shares' * marginal_price(...)`.
pub fn expand_stockholding(
    space: &OutcomeSpace,
    subspace: &[String],
    marginal_shares: &[f64],
) -> Result<StockholdingVector, MarginalError> {
    let indexer = SubspaceIndexer::new(space, subspace)?;
    if marginal_shares.len() != indexer.num_outcomes {
        return Err(MarginalError::LengthMismatch {
            expected: indexer.num_outcomes,
            got: marginal_shares.len(),
        });
    }
    let projection = indexer.projection_table(space);
    Ok(StockholdingVector::from_raw(
        projection.iter().map(|&a| marginal_shares[a]).collect(),
    ))
}

/// Demand of a marginal utility agent as a full-space stockholding.
///
/// The agent optimizes over its bundle goods only, so this is the ordinary
/// utility demand evaluated with marginal prices, expanded back to the full
/// space. Full-scope agents reduce to [`crate::behavior::demand`] exactly.
pub fn marginal_demand(
    space: &OutcomeSpace,
    agent: &Agent,
    prices: &PriceVector,
) -> Result<StockholdingVector, MarginalError> {
    if agent.behavior.is_betting() {
        return Err(MarginalError::UnsupportedBehavior(
            agent.behavior.kind().to_string(),
        ));
    }
    match &agent.scope {
        Scope::Full(belief) => {
            if belief.len() != prices.len() {
                return Err(BehaviorError::LengthMismatch {
                    belief: belief.len(),
                    prices: prices.len(),
                }
                .into());
            }
            let shares = demand_kernel(&agent.behavior, agent.wealth, belief, prices)?;
            Ok(StockholdingVector::from_raw(shares))
        }
        Scope::Marginal(sub) => {
            let bundle_prices = marginal_price(space, prices, sub.variables())?;
            if sub.table().len() != bundle_prices.len() {
                return Err(MarginalError::LengthMismatch {
                    expected: bundle_prices.len(),
                    got: sub.table().len(),
                });
            }
            let shares = demand_kernel(
                &agent.behavior,
                agent.wealth,
                sub.table(),
                &bundle_prices,
            )?;
            expand_stockholding(space, sub.variables(), &shares)
        }
    }
}
