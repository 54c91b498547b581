//! Equilibrium solvers: closed forms for homogeneous log/exp markets, a
//! damped fixed point for isoelastic and parimutuel markets, and a
//! least-squares minimizer of the equilibrium score for everything else.
//!
//! A utility market clears when aggregate demand vanishes; the score
//! `E(c)`, the squared norm of aggregate demand, is zero exactly at
//! equilibrium and is what the numeric solver drives down. Betting markets
//! clear parimutuel-style instead: each price is its good's share of the
//! total stakes.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::behavior::{proportion, BehaviorError, BehaviorKind, BehaviorSpec};
use crate::marginal::{self, MarginalError};
use crate::market::{MarketSpec, PriceVector, Scope, StockholdingVector, LOG_CLAMP};

/// How an equilibrium was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Analytic,
    FixedPoint,
    Numeric,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Analytic => "analytic",
            Method::FixedPoint => "fixed_point",
            Method::Numeric => "numeric",
        })
    }
}

/// Equilibrium prices with the residual score and solver bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub prices: PriceVector,
    pub score: f64,
    pub iterations: usize,
    pub method: Method,
}

/// Iteration controls shared by the fixed-point and numeric solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Convergence threshold on the equilibrium score.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Fixed-point step fraction in (0, 1].
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
            damping: 0.5,
        }
    }
}

impl SolverConfig {
    fn check(&self) -> Result<(), SolveError> {
        if !(self.tolerance > 0.0) {
            return Err(SolveError::BadConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolveError::BadConfig(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.max_iterations == 0 {
            return Err(SolveError::BadConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("agent {0} is a betting agent; betting markets clear parimutuel-style")]
    WrongClearingRule(String),
    #[error("market not eligible for this solver: {0}")]
    Ineligible(String),
    #[error("invalid solver config: {0}")]
    BadConfig(String),
    #[error(
        "no convergence after {} iterations; best score {:e}",
        best.iterations,
        best.score
    )]
    NonConvergence { best: EquilibriumResult },
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Marginal(#[from] MarginalError),
}

fn sum_of_squares(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum()
}

fn require_utility_market(spec: &MarketSpec) -> Result<(), SolveError> {
    if spec.agents.is_empty() {
        return Err(SolveError::Ineligible("market has no agents".into()));
    }
    for agent in &spec.agents {
        if agent.behavior.is_betting() {
            return Err(SolveError::WrongClearingRule(agent.id.clone()));
        }
    }
    Ok(())
}

fn aggregate_demand(spec: &MarketSpec, prices: &PriceVector) -> Result<Vec<f64>, SolveError> {
    let mut total = vec![0.0; spec.space.num_goods()];
    for agent in &spec.agents {
        let holding = marginal::marginal_demand(&spec.space, agent, prices)?;
        for (acc, &s) in total.iter_mut().zip(holding.iter()) {
            *acc += s;
        }
    }
    Ok(total)
}

/// Entrywise sum of every agent's demand at the given prices, with marginal
/// agents expanded to the full space. Zero exactly at equilibrium.
pub fn excess_demand(
    spec: &MarketSpec,
    prices: &PriceVector,
) -> Result<StockholdingVector, SolveError> {
    require_utility_market(spec)?;
    aggregate_demand(spec, prices).map(StockholdingVector::from_raw)
}

/// The market equilibrium score: squared Euclidean norm of excess demand.
pub fn equilibrium_score(spec: &MarketSpec, prices: &PriceVector) -> Result<f64, SolveError> {
    Ok(sum_of_squares(&excess_demand(spec, prices)?))
}

/// Wealth staked per good by every betting agent, plus the total stake.
fn parimutuel_stakes(
    spec: &MarketSpec,
    prices: &PriceVector,
) -> Result<(Vec<f64>, f64), SolveError> {
    let mut pool = vec![0.0; spec.space.num_goods()];
    for agent in &spec.agents {
        let belief = match &agent.scope {
            Scope::Full(b) => b,
            Scope::Marginal(_) => {
                return Err(SolveError::Ineligible(format!(
                    "agent {} is marginal; betting behavior is only defined on the full space",
                    agent.id
                )))
            }
        };
        let fractions = proportion(&agent.behavior, belief, prices)
            .map_err(|e| match e {
                BehaviorError::NotBetting(_) => SolveError::Ineligible(format!(
                    "agent {} is a utility agent; parimutuel clearing does not apply",
                    agent.id
                )),
                other => SolveError::Behavior(other),
            })?;
        for (acc, &f) in pool.iter_mut().zip(fractions.iter()) {
            *acc += agent.wealth * f;
        }
    }
    let total = pool.iter().sum();
    Ok((pool, total))
}

/// Stake imbalance at the given prices: each good's stake minus its share
/// of the pool, squared and summed. Zero exactly at the parimutuel fixed
/// point (and trivially when nobody stakes anything).
pub(crate) fn parimutuel_score(spec: &MarketSpec, prices: &PriceVector) -> Result<f64, SolveError> {
    let (pool, total) = parimutuel_stakes(spec, prices)?;
    Ok(pool
        .iter()
        .zip(prices.iter())
        .map(|(stake, c)| {
            let r = stake - c * total;
            r * r
        })
        .sum())
}

/// Closed-form equilibrium for homogeneous full-scope markets.
///
/// Log-utility and constant-bet markets clear at the wealth-weighted
/// arithmetic mean of beliefs; exponential-utility markets at the
/// normalized geometric mean with exponent `1/N_A`. Anything else is
/// ineligible and should fall back to a numeric solver.
pub fn solve_analytic(spec: &MarketSpec) -> Result<EquilibriumResult, SolveError> {
    if spec.agents.is_empty() {
        return Err(SolveError::Ineligible("market has no agents".into()));
    }
    if !spec.all_full_scope() {
        return Err(SolveError::Ineligible(
            "analytic forms need full-scope agents".into(),
        ));
    }
    let kind = spec
        .common_kind()
        .ok_or_else(|| SolveError::Ineligible("market is not homogeneous".into()))?;
    let n = spec.space.num_goods();
    let prices = match kind {
        BehaviorKind::LogUtility | BehaviorKind::ConstantBet => {
            let total_wealth = spec.total_wealth();
            if !(total_wealth > 0.0) {
                return Err(SolveError::Ineligible(
                    "wealth-weighted mean needs positive total wealth".into(),
                ));
            }
            let mut mean = vec![0.0; n];
            for agent in &spec.agents {
                let belief = agent.full_belief().expect("full scope checked");
                for (acc, &p) in mean.iter_mut().zip(belief.iter()) {
                    *acc += agent.wealth * p;
                }
            }
            for v in &mut mean {
                *v /= total_wealth;
            }
            PriceVector::from_raw(mean)
        }
        BehaviorKind::ExpUtility => {
            let exponent = 1.0 / spec.agents.len() as f64;
            let mut log_mean = vec![0.0; n];
            for agent in &spec.agents {
                let belief = agent.full_belief().expect("full scope checked");
                for (acc, &p) in log_mean.iter_mut().zip(belief.iter()) {
                    *acc += exponent * p.max(LOG_CLAMP).ln();
                }
            }
            let peak = log_mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = log_mean.iter().map(|l| (l - peak).exp()).collect();
            let norm: f64 = raw.iter().sum();
            PriceVector::from_raw(raw.into_iter().map(|v| v / norm).collect())
        }
        other => {
            return Err(SolveError::Ineligible(format!(
                "no closed form for homogeneous {other} markets"
            )))
        }
    };
    let score = match kind {
        BehaviorKind::ConstantBet => parimutuel_score(spec, &prices)?,
        _ => equilibrium_score(spec, &prices)?,
    };
    Ok(EquilibriumResult {
        prices,
        score,
        iterations: 0,
        method: Method::Analytic,
    })
}

/// Damped fixed-point iteration shared by the isoelastic and parimutuel
/// solvers. `map` sends prices to the next candidate (already on the
/// simplex); `score` is the residual driven to zero. The undamped candidate
/// is probed first so maps that land exactly converge in one step.
fn fixed_point_loop(
    config: &SolverConfig,
    start: Vec<f64>,
    mut score: impl FnMut(&PriceVector) -> Result<f64, SolveError>,
    mut map: impl FnMut(&PriceVector) -> Result<Vec<f64>, SolveError>,
) -> Result<EquilibriumResult, SolveError> {
    config.check()?;
    let mut current = PriceVector::from_raw(start);
    let mut best: Option<EquilibriumResult> = None;
    let track = |prices: &PriceVector, value: f64, iterations: usize, best: &mut Option<EquilibriumResult>| {
        if best.as_ref().map_or(true, |b| value < b.score) {
            *best = Some(EquilibriumResult {
                prices: prices.clone(),
                score: value,
                iterations,
                method: Method::FixedPoint,
            });
        }
    };
    for iteration in 0..config.max_iterations {
        let value = score(&current)?;
        track(&current, value, iteration, &mut best);
        if value < config.tolerance {
            return Ok(EquilibriumResult {
                prices: current,
                score: value,
                iterations: iteration,
                method: Method::FixedPoint,
            });
        }
        let candidate_raw = map(&current)?;
        let interior = candidate_raw.iter().all(|&v| v > 0.0);
        let candidate = PriceVector::normalized(candidate_raw).map_err(|e| {
            SolveError::Ineligible(format!("fixed-point iterate left the simplex: {e}"))
        })?;
        if interior {
            let candidate_value = score(&candidate)?;
            track(&candidate, candidate_value, iteration + 1, &mut best);
            if candidate_value < config.tolerance {
                return Ok(EquilibriumResult {
                    prices: candidate,
                    score: candidate_value,
                    iterations: iteration + 1,
                    method: Method::FixedPoint,
                });
            }
        }
        let d = config.damping;
        let mixed: Vec<f64> = current
            .iter()
            .zip(candidate.iter())
            .map(|(c, t)| (1.0 - d) * c + d * t)
            .collect();
        current = PriceVector::normalized(mixed).expect("mix of simplex points");
    }
    Err(SolveError::NonConvergence {
        best: best.expect("at least one iterate scored"),
    })
}

/// Fixed point for homogeneous isoelastic markets.
///
/// The price relation `c_k ∝ Σ_i W_i (P_i(k)/c_k)^(1/η) / D_i(c)` has no
/// closed form; rearranged as the tatonnement map
/// `T(c)_k = c_k (1 + excess_k / ΣW)` its fixed points are exactly the
/// equilibria, and the budget gauge keeps `T(c)` on the simplex.
pub fn solve_isoelastic(
    spec: &MarketSpec,
    config: &SolverConfig,
) -> Result<EquilibriumResult, SolveError> {
    if spec.agents.is_empty() {
        return Err(SolveError::Ineligible("market has no agents".into()));
    }
    if !spec.all_full_scope() {
        return Err(SolveError::Ineligible(
            "isoelastic fixed point needs full-scope agents".into(),
        ));
    }
    if spec.common_kind() != Some(BehaviorKind::IsoelasticUtility) {
        return Err(SolveError::Ineligible(
            "fixed point applies to homogeneous isoelastic markets".into(),
        ));
    }
    let total_wealth = spec.total_wealth();
    if !(total_wealth > 0.0) {
        return Err(SolveError::Ineligible(
            "isoelastic demand scales with wealth; total wealth must be positive".into(),
        ));
    }
    let n = spec.space.num_goods();
    fixed_point_loop(
        config,
        vec![1.0 / n as f64; n],
        |prices| Ok(sum_of_squares(&aggregate_demand(spec, prices)?)),
        |prices| {
            let excess = aggregate_demand(spec, prices)?;
            Ok(prices
                .iter()
                .zip(&excess)
                .map(|(c, e)| c * (1.0 + e / total_wealth))
                .collect())
        },
    )
}

/// Parimutuel clearing for betting markets: the fixed point of
/// `c_k = Σ_i W_i φ_i(k, c) / Σ_j Σ_i W_i φ_i(j, c)`.
///
/// Constant bets make the map price-independent, so the probe step lands on
/// the wealth-weighted mean immediately. If nobody stakes anything at the
/// current prices the market is already cleared.
pub fn solve_parimutuel(
    spec: &MarketSpec,
    config: &SolverConfig,
) -> Result<EquilibriumResult, SolveError> {
    if spec.agents.is_empty() {
        return Err(SolveError::Ineligible("market has no agents".into()));
    }
    let n = spec.space.num_goods();
    fixed_point_loop(
        config,
        vec![1.0 / n as f64; n],
        |prices| parimutuel_score(spec, prices),
        |prices| {
            let (pool, total) = parimutuel_stakes(spec, prices)?;
            if total > 0.0 {
                Ok(pool.into_iter().map(|p| p / total).collect())
            } else {
                // No stakes anywhere: prices already clear the market.
                Ok(prices.as_slice().to_vec())
            }
        },
    )
}

/// Derivative of a utility agent's demand with respect to prices, aligned
/// with [`demand_kernel`]. Rows are goods, columns price components.
fn demand_jacobian_kernel(
    behavior: &BehaviorSpec,
    wealth: f64,
    beliefs: &[f64],
    prices: &[f64],
) -> Vec<Vec<f64>> {
    let n = prices.len();
    let mut jac = vec![vec![0.0; n]; n];
    match behavior {
        BehaviorSpec::LogUtility => {
            for k in 0..n {
                jac[k][k] = -wealth * beliefs[k] / (prices[k] * prices[k]);
            }
        }
        BehaviorSpec::ExpUtility => {
            let raw: Vec<f64> = beliefs
                .iter()
                .zip(prices)
                .map(|(p, c)| p.max(LOG_CLAMP).ln() - c.ln())
                .collect();
            for k in 0..n {
                for m in 0..n {
                    jac[k][m] = -(raw[m] - 1.0);
                }
                jac[k][k] -= 1.0 / prices[k];
            }
        }
        BehaviorSpec::IsoelasticUtility { eta } => {
            let growth: Vec<f64> = beliefs
                .iter()
                .zip(prices)
                .map(|(p, c)| ((p.max(LOG_CLAMP).ln() - c.ln()) / eta).exp())
                .collect();
            let denom: f64 = growth.iter().zip(prices).map(|(g, c)| g * c).sum();
            let dd: Vec<f64> = growth.iter().map(|g| g * (1.0 - 1.0 / eta)).collect();
            for k in 0..n {
                for m in 0..n {
                    jac[k][m] = -wealth * growth[k] * dd[m] / (denom * denom);
                }
                jac[k][k] -= wealth * growth[k] / (eta * prices[k] * denom);
            }
        }
        _ => unreachable!("jacobian only evaluated for utility kinds"),
    }
    jac
}

/// Jacobian of aggregate demand with respect to full-space prices.
fn aggregate_jacobian(spec: &MarketSpec, prices: &[f64]) -> Result<Vec<Vec<f64>>, SolveError> {
    let n = prices.len();
    let mut total = vec![vec![0.0; n]; n];
    for agent in &spec.agents {
        match &agent.scope {
            Scope::Full(belief) => {
                let jac = demand_jacobian_kernel(&agent.behavior, agent.wealth, belief, prices);
                for (row_acc, row) in total.iter_mut().zip(&jac) {
                    for (acc, v) in row_acc.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
            }
            Scope::Marginal(sub) => {
                let (projection, count) =
                    marginal::projection_of(&spec.space, sub.variables())?;
                let mut bundle_prices = vec![0.0; count];
                for (good, &c) in prices.iter().enumerate() {
                    bundle_prices[projection[good]] += c;
                }
                let jac = demand_jacobian_kernel(
                    &agent.behavior,
                    agent.wealth,
                    sub.table(),
                    &bundle_prices,
                );
                for (y, row_acc) in total.iter_mut().enumerate() {
                    let jac_row = &jac[projection[y]];
                    for (m, acc) in row_acc.iter_mut().enumerate() {
                        *acc += jac_row[projection[m]];
                    }
                }
            }
        }
    }
    Ok(total)
}

fn prices_from_logits(logits: &[f64]) -> Vec<f64> {
    let peak = logits.iter().cloned().fold(0.0f64, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .map(|z| (z - peak).exp())
        .chain(std::iter::once((-peak).exp()))
        .collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Minimizes the equilibrium score over the open simplex for any mix of
/// utility agents, full-scope or marginal.
///
/// Prices are parameterized as normalized exponentials of `N_G - 1` free
/// logits (the last pinned at zero), keeping every iterate strictly
/// interior. A Levenberg-Marquardt iteration on the demand residual starts
/// from uniform prices and stops when the score drops below tolerance or
/// the gradient norm below `tolerance * 1e-2`; the run is deterministic
/// given the spec and config.
pub fn solve_numeric(
    spec: &MarketSpec,
    config: &SolverConfig,
) -> Result<EquilibriumResult, SolveError> {
    config.check()?;
    require_utility_market(spec)?;
    let n = spec.space.num_goods();
    let free = n - 1;

    let residual = |logits: &[f64]| -> Result<(Vec<f64>, Vec<f64>), SolveError> {
        let c = prices_from_logits(logits);
        let r = aggregate_demand(spec, &PriceVector::from_raw(c.clone()))?;
        Ok((c, r))
    };

    let mut logits = vec![0.0; free];
    let (mut c, mut r) = residual(&logits)?;
    let mut score = sum_of_squares(&r);
    let mut mu = 1e-3;
    let mut best = EquilibriumResult {
        prices: PriceVector::from_raw(c.clone()),
        score,
        iterations: 0,
        method: Method::Numeric,
    };

    for iteration in 0..config.max_iterations {
        if score < config.tolerance {
            return Ok(EquilibriumResult {
                prices: PriceVector::from_raw(c),
                score,
                iterations: iteration,
                method: Method::Numeric,
            });
        }

        // Chain the demand jacobian through the softmax: columns are the
        // free logits, dc_i/dz_l = c_i (delta_il - c_l).
        let jc = aggregate_jacobian(spec, &c)?;
        let mut jt = vec![vec![0.0; free]; n];
        for k in 0..n {
            let row_dot: f64 = jc[k].iter().zip(&c).map(|(j, ci)| j * ci).sum();
            for l in 0..free {
                jt[k][l] = c[l] * (jc[k][l] - row_dot);
            }
        }
        let mut jtr = vec![0.0; free];
        for k in 0..n {
            for l in 0..free {
                jtr[l] += jt[k][l] * r[k];
            }
        }
        let gradient_norm = 2.0 * sum_of_squares(&jtr).sqrt();
        if gradient_norm < config.tolerance * 1e-2 {
            return Ok(EquilibriumResult {
                prices: PriceVector::from_raw(c),
                score,
                iterations: iteration,
                method: Method::Numeric,
            });
        }

        let mut jtj = DMatrix::zeros(free, free);
        for i in 0..free {
            for j in 0..free {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += jt[k][i] * jt[k][j];
                }
                jtj[(i, j)] = acc;
            }
        }
        let rhs = DVector::from_fn(free, |i, _| -jtr[i]);

        // Levenberg-Marquardt: inflate the diagonal until a step improves.
        let mut stepped = false;
        while mu < 1e14 {
            let damped = &jtj + DMatrix::identity(free, free) * mu;
            let Some(delta) = damped.lu().solve(&rhs) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = logits
                .iter()
                .zip(delta.iter())
                .map(|(z, d)| z + d)
                .collect();
            let (trial_c, trial_r) = residual(&trial)?;
            let trial_score = sum_of_squares(&trial_r);
            if trial_score < score {
                logits = trial;
                c = trial_c;
                r = trial_r;
                score = trial_score;
                mu = (mu / 3.0).max(1e-12);
                stepped = true;
                break;
            }
            mu *= 10.0;
        }
        if score < best.score {
            best = EquilibriumResult {
                prices: PriceVector::from_raw(c.clone()),
                score,
                iterations: iteration + 1,
                method: Method::Numeric,
            };
        }
        if !stepped {
            return Err(SolveError::NonConvergence { best });
        }
    }
    if score < config.tolerance {
        return Ok(EquilibriumResult {
            prices: PriceVector::from_raw(c),
            score,
            iterations: config.max_iterations,
            method: Method::Numeric,
        });
    }
    Err(SolveError::NonConvergence { best })
}
