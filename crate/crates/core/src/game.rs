//! Discrete-support optimizer/agent game.
//!
//! The agent observes the deployed decision `x` and picks a distribution
//! `nu` over a finite outcome set to maximize `E_nu[r(x, .)] - tau KL(nu || nu0)`.
//! The maximizer is the exponential tilt `nu*(xi) ∝ nu0(xi) exp(r(x, xi) / tau)`,
//! so the agent's action is represented directly by the tilted measure. The
//! optimizer answers with the grid decision of least cost whose violation
//! probability `nu(g(y, xi) > gamma)` is at most `epsilon`.
//!
//! A grid decision is a Nash equilibrium when the optimizer's answer to the
//! agent's tilt against it is the decision itself; [`nash_search`] finds them
//! by exhaustive search and [`phi_fixed_points`] recomputes the same set as
//! fixed points of the composed map "induce, then optimize" through the
//! likelihood-ratio route. Ties in every argmin go to the lowest grid index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;
/// Slack in the comparison `violation <= epsilon`.
const FEASIBILITY_SLACK: f64 = 1e-12;
/// Largest grid accepted by [`nash_search`].
pub const MAX_GRID: usize = 10_000;

/// Probability measure on finitely many distinct points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let m = DiscreteMeasure { support, weights };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::invalid("baseline.support", "must not be empty"));
        }
        if self.support.len() != self.weights.len() {
            return Err(Error::invalid(
                "baseline.weights",
                format!(
                    "{} weights for {} support points",
                    self.weights.len(),
                    self.support.len()
                ),
            ));
        }
        let dim = self.support[0].len();
        for (i, p) in self.support.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::invalid(
                    format!("baseline.support[{i}]"),
                    format!("expected dimension {dim}, found {}", p.len()),
                ));
            }
            if self.support[..i].contains(p) {
                return Err(Error::invalid(
                    format!("baseline.support[{i}]"),
                    "support points must be distinct",
                ));
            }
        }
        for (i, w) in self.weights.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid(
                    format!("baseline.weights[{i}]"),
                    format!("must be nonnegative, got {w}"),
                ));
            }
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(
                "baseline.weights",
                format!("must sum to 1, got {total}"),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_variation(&self, other: &DiscreteMeasure) -> f64 {
        0.5 * self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && !tau.is_nan() {
        Ok(())
    } else {
        Err(Error::invalid(
            "tau",
            format!("must be positive, got {tau}"),
        ))
    }
}

/// Exponential tilt of `baseline` by `exp(reward / tau)`. `tau = inf` returns
/// the baseline unchanged.
pub fn kl_tilt(
    baseline: &DiscreteMeasure,
    reward_values: &[f64],
    tau: f64,
) -> Result<DiscreteMeasure> {
    check_len(baseline.len(), reward_values.len())?;
    check_tau(tau)?;
    if tau.is_infinite() {
        return Ok(baseline.clone());
    }
    let shift = reward_values
        .iter()
        .zip(&baseline.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(r, _)| r / tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = reward_values
        .iter()
        .zip(&baseline.weights)
        .map(|(r, &w)| {
            if w > 0.0 {
                w * (r / tau - shift).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(DiscreteMeasure {
        support: baseline.support.clone(),
        weights,
    })
}

/// Likelihood ratio `L(xi) = exp(r(xi)/tau) / E_nu0[exp(r/tau)]`, evaluated
/// through log-sum-exp.
pub fn likelihood_ratio(
    baseline: &DiscreteMeasure,
    reward_values: &[f64],
    tau: f64,
) -> Result<Vec<f64>> {
    check_len(baseline.len(), reward_values.len())?;
    check_tau(tau)?;
    if tau.is_infinite() {
        return Ok(vec![1.0; baseline.len()]);
    }
    let logs: Vec<f64> = reward_values.iter().map(|r| r / tau).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = m + baseline
        .weights
        .iter()
        .zip(&logs)
        .map(|(w, l)| w * (l - m).exp())
        .sum::<f64>()
        .ln();
    Ok(logs.iter().map(|l| (l - log_norm).exp()).collect())
}

/// `KL(p || q)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    check_len(q.len(), p.len())?;
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.weights.iter().zip(&q.weights).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::AbsoluteContinuity { index: i, mass: pi });
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

/// `sum_i r_i nu_i - tau KL(nu || nu0)`.
pub fn agent_utility(
    baseline: &DiscreteMeasure,
    candidate: &DiscreteMeasure,
    reward_values: &[f64],
    tau: f64,
) -> Result<f64> {
    check_len(baseline.len(), reward_values.len())?;
    check_tau(tau)?;
    let kl = kl_divergence(candidate, baseline)?;
    let expected: f64 = candidate
        .weights
        .iter()
        .zip(reward_values)
        .map(|(w, r)| w * r)
        .sum();
    if tau.is_infinite() {
        return Ok(if kl == 0.0 {
            expected
        } else {
            f64::NEG_INFINITY
        });
    }
    Ok(expected - tau * kl)
}

/// Agent reward `r(x, xi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardModel {
    /// `scale <x, xi>`.
    Bilinear { scale: f64 },
    /// Explicit values indexed `[grid index][support index]`.
    Table { values: Vec<Vec<f64>> },
}

/// Constraint function `g(x, xi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintModel {
    /// `1 - <x, xi>`, labels folded into the outcome points.
    Margin,
    /// Explicit values indexed `[grid index][support index]`.
    Table { values: Vec<Vec<f64>> },
}

/// Optimizer cost `f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveModel {
    /// `|x|^2 / 2`.
    HalfSquaredNorm,
    /// Explicit value per grid decision.
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub reward: RewardModel,
    /// Deviation temperature; `None` is the static agent (`tau = inf`).
    #[serde(default)]
    pub tau: Option<f64>,
}

impl AgentSpec {
    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub decision_grid: Vec<Vec<f64>>,
    pub agent: AgentSpec,
    pub baseline: DiscreteMeasure,
    pub constraint: ConstraintModel,
    #[serde(default)]
    pub gamma: f64,
    pub epsilon: f64,
    pub objective: ObjectiveModel,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GameSpec {
    /// Checks shapes and ranges, then that every grid decision, deployed as
    /// the environment trigger, leaves at least one feasible grid decision.
    pub fn validate(&self) -> Result<()> {
        if self.decision_grid.is_empty() {
            return Err(Error::invalid("decision_grid", "must not be empty"));
        }
        if self.decision_grid.len() > MAX_GRID {
            return Err(Error::invalid(
                "decision_grid",
                format!(
                    "at most {MAX_GRID} decisions, got {}",
                    self.decision_grid.len()
                ),
            ));
        }
        self.baseline.validate()?;
        let g = self.decision_grid.len();
        let s = self.baseline.len();
        let xdim = self.decision_grid[0].len();
        for (i, x) in self.decision_grid.iter().enumerate() {
            if x.len() != xdim {
                return Err(Error::invalid(
                    format!("decision_grid[{i}]"),
                    format!("expected dimension {xdim}, found {}", x.len()),
                ));
            }
        }
        let table_shape = |field: &str, values: &Vec<Vec<f64>>| -> Result<()> {
            if values.len() != g {
                return Err(Error::invalid(
                    field,
                    format!("expected {g} rows, found {}", values.len()),
                ));
            }
            for (i, row) in values.iter().enumerate() {
                if row.len() != s {
                    return Err(Error::invalid(
                        format!("{field}[{i}]"),
                        format!("expected {s} columns, found {}", row.len()),
                    ));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(
                        format!("{field}[{i}]"),
                        "values must be finite",
                    ));
                }
            }
            Ok(())
        };
        let bilinear_dims = || -> Result<()> {
            let sdim = self.baseline.support[0].len();
            if sdim != xdim {
                return Err(Error::invalid(
                    "baseline.support",
                    format!("outcome dimension {sdim} differs from decision dimension {xdim}"),
                ));
            }
            Ok(())
        };
        match &self.agent.reward {
            RewardModel::Table { values } => table_shape("agent.reward.values", values)?,
            RewardModel::Bilinear { scale } => {
                if !scale.is_finite() {
                    return Err(Error::invalid("agent.reward.scale", "must be finite"));
                }
                bilinear_dims()?
            }
        }
        match &self.constraint {
            ConstraintModel::Table { values } => table_shape("constraint.values", values)?,
            ConstraintModel::Margin => bilinear_dims()?,
        }
        if let ObjectiveModel::Table { values } = &self.objective {
            if values.len() != g {
                return Err(Error::invalid(
                    "objective.values",
                    format!("expected {g} entries, found {}", values.len()),
                ));
            }
        }
        if let Some(tau) = self.agent.tau {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::invalid(
                    "agent.tau",
                    format!("must be positive, got {tau}"),
                ));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("must lie in (0, 1], got {}", self.epsilon),
            ));
        }
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be finite"));
        }
        for i in 0..g {
            let induced = self.induced_measure(i)?;
            if (0..g).all(|j| !self.is_feasible(j, &induced)) {
                return Err(Error::invalid(
                    format!("decision_grid[{i}]"),
                    "the measure induced by this decision leaves no feasible grid decision",
                ));
            }
        }
        Ok(())
    }

    pub fn reward_values(&self, x: usize) -> Vec<f64> {
        match &self.agent.reward {
            RewardModel::Bilinear { scale } => self
                .baseline
                .support
                .iter()
                .map(|xi| scale * dot(&self.decision_grid[x], xi))
                .collect(),
            RewardModel::Table { values } => values[x].clone(),
        }
    }

    pub fn constraint_value(&self, x: usize, outcome: usize) -> f64 {
        match &self.constraint {
            ConstraintModel::Margin => {
                1.0 - dot(&self.decision_grid[x], &self.baseline.support[outcome])
            }
            ConstraintModel::Table { values } => values[x][outcome],
        }
    }

    pub fn objective_value(&self, x: usize) -> f64 {
        match &self.objective {
            ObjectiveModel::HalfSquaredNorm => {
                0.5 * dot(&self.decision_grid[x], &self.decision_grid[x])
            }
            ObjectiveModel::Table { values } => values[x],
        }
    }

    /// Agent best response (the KL tilt) to deployed grid decision `x`.
    pub fn induced_measure(&self, x: usize) -> Result<DiscreteMeasure> {
        kl_tilt(&self.baseline, &self.reward_values(x), self.agent.tau())
    }

    /// `nu(g(x, xi) > gamma)`; `g = gamma` counts as satisfied.
    pub fn violation(&self, x: usize, measure: &DiscreteMeasure) -> f64 {
        measure
            .weights
            .iter()
            .enumerate()
            .filter(|&(k, _)| self.constraint_value(x, k) > self.gamma)
            .map(|(_, w)| w)
            .sum()
    }

    fn is_feasible(&self, x: usize, measure: &DiscreteMeasure) -> bool {
        self.violation(x, measure) <= self.epsilon + FEASIBILITY_SLACK
    }
}

/// Grid index of the least-cost decision that is chance-feasible under
/// `induced`; lowest index among ties.
pub fn optimizer_best_response(game: &GameSpec, induced: &DiscreteMeasure) -> Result<usize> {
    induced.validate()?;
    check_len(game.baseline.len(), induced.len())?;
    let mut best: Option<(usize, f64)> = None;
    for x in 0..game.decision_grid.len() {
        if !game.is_feasible(x, induced) {
            continue;
        }
        let f = game.objective_value(x);
        if best.is_none_or(|(_, bf)| f < bf) {
            best = Some((x, f));
        }
    }
    best.map(|(x, _)| x).ok_or(Error::NoFeasibleDecision)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub index: usize,
    pub decision: Vec<f64>,
    pub induced: DiscreteMeasure,
}

/// All grid decisions `x` with `optimizer_best_response(kl_tilt(x)) == x`.
pub fn nash_search(game: &GameSpec) -> Result<Vec<Equilibrium>> {
    game.validate()?;
    let mut out = Vec::new();
    for x in 0..game.decision_grid.len() {
        let induced = game.induced_measure(x)?;
        if optimizer_best_response(game, &induced)? == x {
            out.push(Equilibrium {
                index: x,
                decision: game.decision_grid[x].clone(),
                induced,
            });
        }
    }
    Ok(out)
}

/// The composed map `Phi(x)`: reweight the baseline by the likelihood ratio
/// of the agent's response to `x`, then take the cheapest feasible decision.
pub fn phi_map(game: &GameSpec) -> Result<Vec<Option<usize>>> {
    let g = game.decision_grid.len();
    let mut by_cost: Vec<usize> = (0..g).collect();
    by_cost.sort_by(|&a, &b| {
        game.objective_value(a)
            .total_cmp(&game.objective_value(b))
            .then(a.cmp(&b))
    });
    let mut phi = Vec::with_capacity(g);
    for x in 0..g {
        let ratio = likelihood_ratio(&game.baseline, &game.reward_values(x), game.agent.tau())?;
        let reweighted: Vec<f64> = ratio
            .iter()
            .zip(&game.baseline.weights)
            .map(|(l, w)| l * w)
            .collect();
        let choice = by_cost.iter().copied().find(|&y| {
            let mass: f64 = (0..reweighted.len())
                .filter(|&k| game.constraint_value(y, k) > game.gamma)
                .map(|k| reweighted[k])
                .sum();
            mass <= game.epsilon + FEASIBILITY_SLACK
        });
        phi.push(choice);
    }
    Ok(phi)
}

/// Grid indices with `Phi(x) = x`.
pub fn phi_fixed_points(game: &GameSpec) -> Result<Vec<usize>> {
    game.validate()?;
    Ok(phi_map(game)?
        .into_iter()
        .enumerate()
        .filter(|&(x, phi)| phi == Some(x))
        .map(|(x, _)| x)
        .collect())
}
