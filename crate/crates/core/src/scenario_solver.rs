//! Scenario programs with a regularized quadratic objective.
//!
//! Solves
//!
//! ```text
//!     minimize    (q/2) |y|^2 + c'y
//!     subject to  a_i'y <= b_i,   i = 1..m
//! ```
//!
//! with the dual active-set method of Goldfarb and Idnani specialised to the
//! Hessian `q I`. The method starts from the unconstrained minimizer and adds
//! violated constraints one at a time while keeping dual feasibility, so it
//! needs no feasible starting point and produces a Farkas-type certificate
//! when the polyhedron is empty.

use nalgebra::{DMatrix, DVector};

use crate::environment::Scenario;
use crate::error::{Error, Result};

/// One affine constraint `normal' y <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub normal: Vec<f64>,
    pub rhs: f64,
}

impl AffineConstraint {
    pub fn new(normal: Vec<f64>, rhs: f64) -> Self {
        AffineConstraint { normal, rhs }
    }

    /// Margin constraint `y <w, xi> >= 1` for a labeled scenario, written as
    /// `(-y xi)' w <= -1`.
    pub fn margin(scenario: &Scenario) -> Self {
        let y = scenario.label.value();
        AffineConstraint {
            normal: scenario.features.iter().map(|x| -y * x).collect(),
            rhs: -1.0,
        }
    }

    /// `normal' y - rhs`; positive means violated.
    pub fn violation(&self, y: &[f64]) -> f64 {
        dot(&self.normal, y) - self.rhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioProgram {
    pub dim: usize,
    /// Coefficient of `|y|^2 / 2`.
    pub quad_weight: f64,
    pub linear_term: Option<Vec<f64>>,
    pub constraints: Vec<AffineConstraint>,
}

impl ScenarioProgram {
    pub fn new(dim: usize) -> Self {
        ScenarioProgram {
            dim,
            quad_weight: 1.0,
            linear_term: None,
            constraints: Vec::new(),
        }
    }

    pub fn with_constraints(dim: usize, constraints: Vec<AffineConstraint>) -> Self {
        ScenarioProgram {
            constraints,
            ..ScenarioProgram::new(dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if !(self.quad_weight.is_finite() && self.quad_weight > 0.0) {
            return Err(Error::invalid(
                "quad_weight",
                format!("must be positive, got {}", self.quad_weight),
            ));
        }
        if let Some(c) = &self.linear_term {
            if c.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: c.len(),
                });
            }
        }
        for con in &self.constraints {
            if con.normal.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: con.normal.len(),
                });
            }
            if !con.rhs.is_finite() || con.normal.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("constraints", "non-finite coefficient"));
            }
        }
        Ok(())
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        let quad = 0.5 * self.quad_weight * dot(y, y);
        match &self.linear_term {
            Some(c) => quad + dot(c, y),
            None => quad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub kkt_tol: f64,
    pub feasibility_tol: f64,
    pub active_tol: f64,
    /// Cap on add/drop operations; `None` scales with the instance size.
    pub max_iterations: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kkt_tol: 1e-9,
            feasibility_tol: 1e-8,
            active_tol: 1e-7,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub optimum: Vec<f64>,
    pub objective_value: f64,
    /// Every constraint with `|a'y - b| <= active_tol`, in index order.
    pub active_set: Vec<usize>,
    /// Lagrange multipliers, one per constraint (zero off the working set).
    pub multipliers: Vec<f64>,
    /// Max of stationarity, primal infeasibility and complementarity residuals.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Solves a scenario program to optimality.
pub fn solve(program: &ScenarioProgram, config: &SolverConfig) -> Result<SolverResult> {
    program.validate()?;
    let d = program.dim;
    let m = program.constraints.len();
    let q = program.quad_weight;
    let max_iter = config.max_iterations.unwrap_or(10 * (m + d) + 100);
    // Constraints are added while violated by more than this.
    let add_tol = 0.01 * config.feasibility_tol;

    let mut y: Vec<f64> = match &program.linear_term {
        Some(c) => c.iter().map(|ci| -ci / q).collect(),
        None => vec![0.0; d],
    };
    // Working set and the matching multipliers.
    let mut working: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let mut iterations = 0usize;

    while let Some(p) = most_violated(program, &y, &working, add_tol) {
        let ap = &program.constraints[p].normal;
        let ap_norm = dot(ap, ap).sqrt();
        let mut lambda_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::MaxIterations {
                    iterations: max_iter,
                    best: y,
                });
            }
            let (z, r) = step_directions(program, &working, ap, q);
            let z_norm = dot(&z, &z).sqrt();
            let primal_step = z_norm > 1e-11 * ap_norm.max(1.0);

            // Largest dual step before some working multiplier hits zero.
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (j, (&rj, &lj)) in r.iter().zip(&lambda).enumerate() {
                if rj > 0.0 {
                    let t = lj / rj;
                    if t < t1 {
                        t1 = t;
                        drop_at = Some(j);
                    }
                }
            }
            let vp = program.constraints[p].violation(&y);
            let t2 = if primal_step {
                (vp / dot(ap, &z)).max(0.0)
            } else {
                f64::INFINITY
            };

            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::Infeasible { constraint: p });
            }
            let t = t1.min(t2);
            if primal_step {
                for (yi, zi) in y.iter_mut().zip(&z) {
                    *yi -= t * zi;
                }
            }
            for (lj, rj) in lambda.iter_mut().zip(&r) {
                *lj -= t * rj;
            }
            lambda_p += t;

            if t2 <= t1 {
                working.push(p);
                lambda.push(lambda_p);
                break;
            }
            let k = drop_at.expect("finite dual step has a blocking index");
            working.remove(k);
            lambda.remove(k);
        }
    }

    let mut multipliers = vec![0.0; m];
    for (&i, &l) in working.iter().zip(&lambda) {
        multipliers[i] = l.max(0.0);
    }
    let kkt_residual = kkt_residual(program, &y, &multipliers);
    let active_set = program
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.violation(&y).abs() <= config.active_tol)
        .map(|(i, _)| i)
        .collect();
    Ok(SolverResult {
        objective_value: program.objective(&y),
        optimum: y,
        active_set,
        multipliers,
        kkt_residual,
        iterations,
    })
}

/// Hard-margin SVM through the origin on a set of labeled scenarios: the
/// empirical best response. Returns `Infeasible` when the scenarios cannot
/// be separated with unit margin.
pub fn solve_svm_scenarios(samples: &[Scenario], dim: usize) -> Result<SolverResult> {
    solve_svm_scenarios_with(samples, dim, &SolverConfig::default())
}

pub fn solve_svm_scenarios_with(
    samples: &[Scenario],
    dim: usize,
    config: &SolverConfig,
) -> Result<SolverResult> {
    let mut constraints = Vec::with_capacity(samples.len());
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.features.len(),
            });
        }
        constraints.push(AffineConstraint::margin(s));
    }
    solve(&ScenarioProgram::with_constraints(dim, constraints), config)
}

fn most_violated(
    program: &ScenarioProgram,
    y: &[f64],
    working: &[usize],
    tol: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in program.constraints.iter().enumerate() {
        let v = c.violation(y);
        if v > tol && best.is_none_or(|(_, bv)| v > bv) && !working.contains(&i) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Primal direction `z = (I - P) a_p / q` and dual direction
/// `r = (N'N)^{-1} N' a_p`, where `P` projects onto the span of the working
/// normals `N`.
fn step_directions(
    program: &ScenarioProgram,
    working: &[usize],
    ap: &[f64],
    q: f64,
) -> (Vec<f64>, Vec<f64>) {
    let d = program.dim;
    let a = DVector::from_column_slice(ap);
    if working.is_empty() {
        return (ap.iter().map(|v| v / q).collect(), Vec::new());
    }
    let n = DMatrix::from_fn(d, working.len(), |row, col| {
        program.constraints[working[col]].normal[row]
    });
    let qr = n.qr();
    let qmat = qr.q();
    let rmat = qr.r();
    let qta = qmat.transpose() * &a;
    let r = rmat
        .solve_upper_triangular(&qta)
        .map(|v| v.as_slice().to_vec())
        .unwrap_or_else(|| vec![0.0; working.len()]);
    let z = (&a - &qmat * qta) / q;
    (z.as_slice().to_vec(), r)
}

fn kkt_residual(program: &ScenarioProgram, y: &[f64], multipliers: &[f64]) -> f64 {
    let mut grad: Vec<f64> = y.iter().map(|v| program.quad_weight * v).collect();
    if let Some(c) = &program.linear_term {
        for (g, ci) in grad.iter_mut().zip(c) {
            *g += ci;
        }
    }
    let mut worst = 0.0_f64;
    for (c, &l) in program.constraints.iter().zip(multipliers) {
        let v = c.violation(y);
        worst = worst.max(v).max((l * v).abs());
        if l != 0.0 {
            for (g, ai) in grad.iter_mut().zip(&c.normal) {
                *g += l * ai;
            }
        }
    }
    grad.iter().fold(worst, |acc, g| acc.max(g.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
