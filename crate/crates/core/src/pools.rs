//! Closed-form opinion pools used as independent oracles for the market
//! equilibria: weighted averaging, normalized products, and gated mixtures.
//!
//! Nothing here touches the equilibrium machinery, so agreement between a
//! solved market and a pool is a genuine cross-check rather than the same
//! code run twice.

use thiserror::Error;

use crate::market::{BeliefVector, LOG_CLAMP};

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("pool input is empty")]
    Empty,
    #[error("{weights} weights for {beliefs} beliefs")]
    CountMismatch { weights: usize, beliefs: usize },
    #[error("beliefs have inconsistent lengths ({first} vs {other})")]
    LengthMismatch { first: usize, other: usize },
    #[error("weight {index} is {value}, must be finite and nonnegative")]
    BadWeight { index: usize, value: f64 },
    #[error("all weights are zero")]
    ZeroWeights,
    #[error("exponent must be positive, got {0}")]
    BadExponent(f64),
    #[error("pool output is zero everywhere")]
    Degenerate,
}

/// Beliefs plus nonnegative combination weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolInput {
    pub beliefs: Vec<BeliefVector>,
    pub weights: Vec<f64>,
}

impl PoolInput {
    pub fn new(beliefs: Vec<BeliefVector>, weights: Vec<f64>) -> Self {
        Self { beliefs, weights }
    }
}

fn check_shapes(beliefs: &[BeliefVector], weights: &[f64]) -> Result<(), PoolError> {
    if beliefs.is_empty() {
        return Err(PoolError::Empty);
    }
    if weights.len() != beliefs.len() {
        return Err(PoolError::CountMismatch {
            weights: weights.len(),
            beliefs: beliefs.len(),
        });
    }
    let first = beliefs[0].len();
    for b in beliefs {
        if b.len() != first {
            return Err(PoolError::LengthMismatch {
                first,
                other: b.len(),
            });
        }
    }
    let mut any_positive = false;
    for (index, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(PoolError::BadWeight { index, value: w });
        }
        any_positive |= w > 0.0;
    }
    if !any_positive {
        return Err(PoolError::ZeroWeights);
    }
    Ok(())
}

/// The weighted arithmetic mean of the beliefs. Equal weights give the
/// plain average.
pub fn weighted_average_pool(input: &PoolInput) -> Result<BeliefVector, PoolError> {
    check_shapes(&input.beliefs, &input.weights)?;
    let total: f64 = input.weights.iter().sum();
    let len = input.beliefs[0].len();
    let mut out = vec![0.0; len];
    for (belief, &weight) in input.beliefs.iter().zip(&input.weights) {
        for (acc, &p) in out.iter_mut().zip(belief.iter()) {
            *acc += weight * p;
        }
    }
    for v in &mut out {
        *v /= total;
    }
    Ok(BeliefVector::from_raw(out))
}

/// The normalized product of beliefs, each raised to `exponent`.
///
/// Accumulates in log space; an outcome assigned zero by any belief stays
/// exactly zero, and if that happens everywhere the pool is degenerate.
pub fn product_pool(beliefs: &[BeliefVector], exponent: f64) -> Result<BeliefVector, PoolError> {
    if beliefs.is_empty() {
        return Err(PoolError::Empty);
    }
    if !exponent.is_finite() || exponent <= 0.0 {
        return Err(PoolError::BadExponent(exponent));
    }
    let len = beliefs[0].len();
    for b in beliefs {
        if b.len() != len {
            return Err(PoolError::LengthMismatch {
                first: len,
                other: b.len(),
            });
        }
    }
    let mut log_products = vec![0.0f64; len];
    let mut annihilated = vec![false; len];
    for belief in beliefs {
        for ((lp, dead), &p) in log_products.iter_mut().zip(&mut annihilated).zip(belief.iter()) {
            if p == 0.0 {
                *dead = true;
            } else {
                *lp += exponent * p.max(LOG_CLAMP).ln();
            }
        }
    }
    if annihilated.iter().all(|&d| d) {
        return Err(PoolError::Degenerate);
    }
    let peak = log_products
        .iter()
        .zip(&annihilated)
        .filter(|(_, &dead)| !dead)
        .map(|(lp, _)| *lp)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = log_products
        .iter()
        .zip(&annihilated)
        .map(|(lp, &dead)| if dead { 0.0 } else { (lp - peak).exp() })
        .collect();
    let norm: f64 = out.iter().sum();
    if norm == 0.0 {
        return Err(PoolError::Degenerate);
    }
    for v in &mut out {
        *v /= norm;
    }
    Ok(BeliefVector::from_raw(out))
}

/// The mixture shape: a weighted average whose weights are the gates
/// assigned to the experts for one instance.
pub fn gated_pool(
    instance_weights: &[f64],
    beliefs: &[BeliefVector],
) -> Result<BeliefVector, PoolError> {
    weighted_average_pool(&PoolInput::new(
        beliefs.to_vec(),
        instance_weights.to_vec(),
    ))
}
