//! Best-response iterations.
//!
//! The stochastic iteration deploys `w_t`, draws `N_t` scenarios from the
//! induced distribution `P_{w_t}`, and sets `w_{t+1}` to the scenario
//! solution. `N_t` follows a logarithmic schedule so that the approximation
//! error shrinks along the run. The deterministic iteration applies a
//! supplied exact best-response map and is used for contraction toys.
//!
//! # Trace format
//!
//! [`Trace::write_jsonl`] writes one JSON object per line:
//!
//! ```text
//! {"record":"header","seed":7,"config":{...}}
//! {"record":"state","t":0,"w":[0.0,0.0],"n_t":20,"residual":0.41,"violation_estimate":1.0,"objective":0.0,"solver_status":"optimal"}
//! ...
//! {"record":"state","t":12,"w":[...],"n_t":null,"residual":null,...,"solver_status":"not_run"}
//! {"record":"summary","converged":true,"steps":12,"final_iterate":[...],"contraction_estimate":0.31}
//! ```
//!
//! State `t` holds the iterate `w_t` and describes the step taken from it:
//! `n_t` scenarios were drawn and `residual = |w_{t+1} - w_t|`. The last state
//! has taken no step, so both are `null`. `violation_estimate` is the Monte
//! Carlo estimate of `P_{w_t}(y <w_t, xi> < 1)`. When snapshot recording is
//! enabled a state also carries the drawn scenarios under `snapshot`. Numbers
//! use the shortest representation that round-trips exactly.

use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::minimal_sample_size;
use crate::environment::{
    sample_induced, violation_probability, EnvironmentMap, Scenario, ViolationMode,
};
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::rng::{StreamKey, ORACLE_STREAM, TRAINING_STREAM};
use crate::scenario_solver::{solve_svm_scenarios_with, SolverConfig};

/// Logarithmic sample schedule `N_t = min(n_max, n0 + ceil(c_log ln(1 + t)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub n0: usize,
    pub c_log: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Raise `n0` to the scenario bound for the problem's `(epsilon, beta, dim)`.
    #[serde(default)]
    pub bound_floor: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            n0: 20,
            c_log: 5.0,
            n_max: None,
            bound_floor: false,
        }
    }
}

impl Schedule {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n0 < dim + 1 {
            return Err(Error::invalid(
                "schedule.n0",
                format!("must be at least dim + 1 = {}, got {}", dim + 1, self.n0),
            ));
        }
        if !(self.c_log.is_finite() && self.c_log >= 0.0) {
            return Err(Error::invalid(
                "schedule.c_log",
                format!("must be nonnegative, got {}", self.c_log),
            ));
        }
        if let Some(cap) = self.n_max {
            if cap < self.n0 {
                return Err(Error::invalid(
                    "schedule.n_max",
                    format!("must be at least n0 = {}, got {cap}", self.n0),
                ));
            }
        }
        Ok(())
    }

    /// Raises `n0` to the scenario bound `minimal_sample_size(epsilon, beta, dim)`.
    pub fn with_bound_floor(mut self, problem: &ProblemSpec) -> Result<Self> {
        let floor = minimal_sample_size(problem.epsilon, problem.beta, problem.dim)? as usize;
        self.n0 = self.n0.max(floor);
        if let Some(cap) = self.n_max.as_mut() {
            *cap = (*cap).max(self.n0);
        }
        Ok(self)
    }

    pub fn sample_size(&self, t: usize) -> usize {
        sample_size(self, t)
    }
}

pub fn sample_size(schedule: &Schedule, t: usize) -> usize {
    let growth = (schedule.c_log * (t as f64).ln_1p()).ceil() as usize;
    let n = schedule.n0 + growth;
    match schedule.n_max {
        Some(cap) => n.min(cap),
        None => n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    /// The scenario program was empty; the iterate was kept.
    InfeasibleRetained,
    /// No step has been taken from this state.
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub t: usize,
    #[serde(rename = "w")]
    pub iterate: Vec<f64>,
    #[serde(rename = "n_t")]
    pub samples_used: Option<usize>,
    pub residual: Option<f64>,
    pub violation_estimate: f64,
    pub objective: f64,
    pub solver_status: SolverStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Vec<Scenario>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_steps: usize,
    pub residual_tol: f64,
    pub patience: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            max_steps: 50,
            residual_tol: 1e-2,
            patience: 3,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol.is_finite() && self.residual_tol >= 0.0) {
            return Err(Error::invalid(
                "stopping.residual_tol",
                format!("must be nonnegative, got {}", self.residual_tol),
            ));
        }
        if self.patience == 0 {
            return Err(Error::invalid("stopping.patience", "must be at least 1"));
        }
        Ok(())
    }
}

/// Evaluation and bookkeeping options of a stochastic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Monte Carlo samples per violation estimate.
    pub n_eval: usize,
    /// Added to the run seed to key the evaluation stream.
    pub eval_seed_offset: u64,
    pub record_snapshots: bool,
    /// Starting decision; defaults to the origin.
    pub initial: Option<Vec<f64>>,
    /// Probe the contraction modulus around the final iterate.
    pub estimate_contraction: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            n_eval: 100_000,
            eval_seed_offset: 1,
            record_snapshots: false,
            initial: None,
            estimate_contraction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub converged: bool,
    pub steps: usize,
    pub final_iterate: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction_estimate: Option<f64>,
    /// Wall-clock seconds; kept out of the trace file so runs stay byte-stable.
    #[serde(skip)]
    pub wallclock_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    pub config: Option<serde_json::Value>,
    pub states: Vec<IterationState>,
    pub summary: TraceSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceRecord {
    Header {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<serde_json::Value>,
    },
    State(IterationState),
    Summary(TraceSummary),
}

impl Trace {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = |rec: &TraceRecord| -> Result<()> {
            let text = serde_json::to_string(rec).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out, "{text}")?;
            Ok(())
        };
        line(&TraceRecord::Header {
            seed: self.seed,
            config: self.config.clone(),
        })?;
        for s in &self.states {
            line(&TraceRecord::State(s.clone()))?;
        }
        line(&TraceRecord::Summary(self.summary.clone()))?;
        out.flush()?;
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Trace> {
        let mut header = None;
        let mut states = Vec::new();
        let mut summary = None;
        let mut last_line = 0;
        for (idx, line) in input.lines().enumerate() {
            let lineno = idx + 1;
            last_line = lineno;
            let line = line.map_err(|e| Error::Trace {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Trace {
                line: lineno,
                message,
            };
            let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            match rec {
                TraceRecord::Header { seed, config } => {
                    if header.is_some() || !states.is_empty() {
                        return Err(bad("header must be the first record".into()));
                    }
                    header = Some((seed, config));
                }
                TraceRecord::State(s) => {
                    if header.is_none() {
                        return Err(bad("state before header".into()));
                    }
                    if summary.is_some() {
                        return Err(bad("state after summary".into()));
                    }
                    if s.t != states.len() {
                        return Err(bad(format!("expected t = {}, found {}", states.len(), s.t)));
                    }
                    states.push(s);
                }
                TraceRecord::Summary(s) => {
                    if summary.is_some() {
                        return Err(bad("duplicate summary".into()));
                    }
                    summary = Some(s);
                }
            }
        }
        let (seed, config) = header.ok_or(Error::Trace {
            line: last_line,
            message: "missing header record".into(),
        })?;
        let summary = summary.ok_or(Error::Trace {
            line: last_line,
            message: "missing summary record".into(),
        })?;
        Ok(Trace {
            seed,
            config,
            states,
            summary,
        })
    }

    /// Steps taken (states minus the initial one).
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn final_iterate(&self) -> &[f64] {
        &self
            .states
            .last()
            .expect("trace has an initial state")
            .iterate
    }
}

/// Shared context of one stochastic run.
#[derive(Debug, Clone)]
pub struct StochasticIteration<'a> {
    pub env: &'a EnvironmentMap,
    pub problem: ProblemSpec,
    pub schedule: Schedule,
    pub options: RunOptions,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl<'a> StochasticIteration<'a> {
    pub fn new(
        env: &'a EnvironmentMap,
        problem: ProblemSpec,
        schedule: Schedule,
        options: RunOptions,
        seed: u64,
    ) -> Result<Self> {
        env.validate()?;
        problem.validate()?;
        schedule.validate(problem.dim)?;
        let schedule = if schedule.bound_floor {
            schedule.with_bound_floor(&problem)?
        } else {
            schedule
        };
        if env.dim() != problem.dim {
            return Err(Error::DimensionMismatch {
                expected: problem.dim,
                found: env.dim(),
            });
        }
        if options.n_eval == 0 {
            return Err(Error::invalid("evaluation.n_eval", "must be at least 1"));
        }
        if let Some(w0) = &options.initial {
            if w0.len() != problem.dim {
                return Err(Error::DimensionMismatch {
                    expected: problem.dim,
                    found: w0.len(),
                });
            }
        }
        Ok(StochasticIteration {
            env,
            problem,
            schedule,
            options,
            solver: SolverConfig::default(),
            seed,
        })
    }

    fn training_key(&self, t: usize) -> StreamKey {
        StreamKey::new(self.seed, TRAINING_STREAM, t as u64)
    }

    fn evaluation_key(&self, t: usize) -> StreamKey {
        StreamKey::new(
            self.seed.wrapping_add(self.options.eval_seed_offset),
            TRAINING_STREAM + 1,
            t as u64,
        )
    }

    /// Fresh state for iterate `w` at step `t`, with its violation estimate.
    pub fn make_state(&self, t: usize, w: Vec<f64>) -> Result<IterationState> {
        let violation_estimate = violation_probability(
            self.env,
            &w,
            &w,
            ViolationMode::MonteCarlo {
                n: self.options.n_eval,
                key: self.evaluation_key(t),
            },
        )?;
        Ok(IterationState {
            t,
            objective: self.problem.objective(&w),
            iterate: w,
            samples_used: None,
            residual: None,
            violation_estimate,
            solver_status: SolverStatus::NotRun,
            snapshot: None,
        })
    }

    pub fn initial_state(&self) -> Result<IterationState> {
        let w0 = self
            .options
            .initial
            .clone()
            .unwrap_or_else(|| vec![0.0; self.problem.dim]);
        self.make_state(0, w0)
    }

    /// One step `w_{t+1} = phi_{N_t}(w_t)`. Completes `state` (sample count,
    /// residual, solver status) and returns the successor.
    pub fn step_stochastic(&self, state: &mut IterationState) -> Result<IterationState> {
        let t = state.t;
        let n = self.schedule.sample_size(t);
        let samples = sample_induced(self.env, &state.iterate, n, self.training_key(t))?;
        let (next, status) =
            match solve_svm_scenarios_with(&samples, self.problem.dim, &self.solver) {
                Ok(res) => (res.optimum, SolverStatus::Optimal),
                Err(Error::Infeasible { .. }) => {
                    (state.iterate.clone(), SolverStatus::InfeasibleRetained)
                }
                Err(e) => return Err(e),
            };
        state.samples_used = Some(n);
        state.residual = Some(distance(&next, &state.iterate));
        state.solver_status = status;
        if self.options.record_snapshots {
            state.snapshot = Some(samples);
        }
        self.make_state(t + 1, next)
    }

    /// Iterates until the residual stays below tolerance for `patience`
    /// consecutive steps or `max_steps` steps were taken.
    pub fn run(&self, stopping: &StoppingRule) -> Result<Trace> {
        stopping.validate()?;
        let started = Instant::now();
        let mut states = vec![self.initial_state()?];
        let mut streak = 0;
        let mut converged = false;
        for _ in 0..stopping.max_steps {
            let current = states.last_mut().expect("nonempty");
            let next = self.step_stochastic(current)?;
            let residual = current.residual.expect("step sets the residual");
            if residual <= stopping.residual_tol {
                streak += 1;
            } else {
                streak = 0;
            }
            states.push(next);
            if streak >= stopping.patience {
                converged = true;
                break;
            }
        }
        let final_iterate = states.last().expect("nonempty").iterate.clone();
        let contraction_estimate = if self.options.estimate_contraction {
            Some(self.probe_contraction(&final_iterate)?)
        } else {
            None
        };
        Ok(Trace {
            seed: self.seed,
            config: None,
            summary: TraceSummary {
                converged,
                steps: states.len() - 1,
                final_iterate,
                contraction_estimate,
                wallclock_secs: started.elapsed().as_secs_f64(),
            },
            states,
        })
    }

    /// High-accuracy best response used as a stand-in for the exact map.
    pub fn oracle(&self) -> Result<ScenarioOracle<'a>> {
        ScenarioOracle::for_problem(
            self.env,
            &self.problem,
            StreamKey::new(self.seed, ORACLE_STREAM, 0),
        )
    }

    /// `K_hat` from axis-aligned probes around `w` under the oracle map.
    pub fn probe_contraction(&self, w: &[f64]) -> Result<f64> {
        let oracle = self.oracle()?;
        let radius = 0.1 * norm(w).max(1.0);
        let pairs = axis_probe_pairs(w, radius);
        estimate_contraction(|x| oracle.best_response(x), &pairs)
    }
}

/// Convenience wrapper around [`StochasticIteration::run`].
pub fn run(
    env: &EnvironmentMap,
    problem: &ProblemSpec,
    schedule: &Schedule,
    stopping: &StoppingRule,
    options: &RunOptions,
    seed: u64,
) -> Result<Trace> {
    StochasticIteration::new(env, *problem, *schedule, options.clone(), seed)?.run(stopping)
}

/// Scenario solve at a large fixed sample size with a fixed key, so that
/// distinct inputs are compared under common random numbers.
#[derive(Debug, Clone)]
pub struct ScenarioOracle<'a> {
    pub env: &'a EnvironmentMap,
    pub n_samples: usize,
    pub key: StreamKey,
    pub solver: SolverConfig,
}

impl<'a> ScenarioOracle<'a> {
    /// Uses `10 * minimal_sample_size(epsilon, 1e-3, d)` samples.
    pub fn for_problem(
        env: &'a EnvironmentMap,
        problem: &ProblemSpec,
        key: StreamKey,
    ) -> Result<Self> {
        Ok(ScenarioOracle {
            env,
            n_samples: oracle_sample_size(problem.epsilon, problem.dim)?,
            key,
            solver: SolverConfig::default(),
        })
    }

    pub fn best_response(&self, w: &[f64]) -> Result<Vec<f64>> {
        let samples = sample_induced(self.env, w, self.n_samples, self.key)?;
        Ok(solve_svm_scenarios_with(&samples, w.len(), &self.solver)?.optimum)
    }
}

pub fn oracle_sample_size(epsilon: f64, dim: usize) -> Result<usize> {
    Ok(10 * minimal_sample_size(epsilon, 1e-3, dim)? as usize)
}

/// Spread of `phi_N(w)` across independent sample draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub mean: Vec<f64>,
    /// Root-mean-square distance of the solutions from their mean.
    pub rms: f64,
    pub infeasible: usize,
}

/// Solves `phi_N(w)` for `repetitions` independent keys
/// `StreamKey(seed, stream, 0..repetitions)`.
pub fn solver_scatter(
    env: &EnvironmentMap,
    w: &[f64],
    n: usize,
    repetitions: usize,
    seed: u64,
    stream: u64,
) -> Result<Scatter> {
    let mut solutions = Vec::with_capacity(repetitions);
    let mut infeasible = 0;
    for r in 0..repetitions {
        let samples = sample_induced(env, w, n, StreamKey::new(seed, stream, r as u64))?;
        match solve_svm_scenarios_with(&samples, w.len(), &SolverConfig::default()) {
            Ok(res) => solutions.push(res.optimum),
            Err(Error::Infeasible { .. }) => infeasible += 1,
            Err(e) => return Err(e),
        }
    }
    if solutions.is_empty() {
        return Err(Error::Infeasible { constraint: 0 });
    }
    let d = w.len();
    let k = solutions.len() as f64;
    let mut mean = vec![0.0; d];
    for s in &solutions {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x / k;
        }
    }
    let rms = (solutions
        .iter()
        .map(|s| distance(s, &mean).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    Ok(Scatter {
        mean,
        rms,
        infeasible,
    })
}

/// Trace of an exact best-response iteration `x_{t+1} = phi(x_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicTrace {
    /// `x_0, x_1, ..., x_T`.
    pub iterates: Vec<Vec<f64>>,
    /// `|x_{t+1} - x_t|` for `t = 0..T`.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl DeterministicTrace {
    pub fn steps(&self) -> usize {
        self.residuals.len()
    }

    pub fn final_iterate(&self) -> &[f64] {
        self.iterates.last().expect("trace has an initial iterate")
    }
}

/// Runs `x_{t+1} = phi(x_t)`.
///
/// Stops once the residual is exactly zero, or once the a posteriori bound
/// `K_t / (1 - K_t) * |x_{t+1} - x_t|` on the distance to the fixed point is
/// at most `tol`, where `K_t` is the ratio of the last two residuals.
pub fn run_deterministic<F>(
    mut phi: F,
    x0: Vec<f64>,
    max_steps: usize,
    tol: f64,
) -> DeterministicTrace
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut iterates = vec![x0];
    let mut residuals: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..max_steps {
        let x = iterates.last().expect("nonempty");
        let next = phi(x);
        let r = distance(&next, x);
        iterates.push(next);
        if r == 0.0 {
            residuals.push(r);
            converged = true;
            break;
        }
        if let Some(&prev) = residuals.last() {
            let k = r / prev;
            if k < 1.0 && k / (1.0 - k) * r <= tol {
                residuals.push(r);
                converged = true;
                break;
            }
        }
        residuals.push(r);
    }
    DeterministicTrace {
        iterates,
        residuals,
        converged,
    }
}

/// `max |phi(x) - phi(x')| / |x - x'|` over the probe pairs; a lower bound
/// on the Lipschitz constant of `phi`.
pub fn estimate_contraction<F>(mut phi: F, probe_pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut k_hat = 0.0_f64;
    for (i, (x, y)) in probe_pairs.iter().enumerate() {
        let gap = distance(x, y);
        if gap == 0.0 {
            return Err(Error::invalid(
                format!("probe_pairs[{i}]"),
                "probe points must be distinct",
            ));
        }
        let fx = phi(x)?;
        let fy = phi(y)?;
        k_hat = k_hat.max(distance(&fx, &fy) / gap);
    }
    Ok(k_hat)
}

/// Pairs `(w - r e_i, w + r e_i)` for every coordinate axis.
pub fn axis_probe_pairs(w: &[f64], radius: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..w.len())
        .map(|i| {
            let mut lo = w.to_vec();
            let mut hi = w.to_vec();
            lo[i] -= radius;
            hi[i] += radius;
            (lo, hi)
        })
        .collect()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{BaselineDistribution, Label, ResponseParams, WeightedScenario};

    fn point_mass_env(features: Vec<f64>, label: Label) -> EnvironmentMap {
        EnvironmentMap::static_env(BaselineDistribution::Discrete {
            support: vec![WeightedScenario {
                features,
                label,
                weight: 1.0,
            }],
        })
        .unwrap()
    }

    #[test]
    fn schedule_values() {
        let s = Schedule::default();
        assert_eq!(s.sample_size(0), 20);
        assert_eq!(s.sample_size(9), 32);
        let mut prev = 0;
        for t in 0..10_000 {
            let n = s.sample_size(t);
            assert!(n >= prev);
            prev = n;
        }
        let capped = Schedule {
            n_max: Some(25),
            ..s
        };
        assert_eq!(capped.sample_size(1000), 25);
    }

    #[test]
    fn schedule_validation_and_floor() {
        let s = Schedule {
            n0: 2,
            ..Schedule::default()
        };
        assert!(s.validate(2).is_err());
        let p = ProblemSpec::new(2, 0.1, 0.05).unwrap();
        let floored = Schedule::default().with_bound_floor(&p).unwrap();
        assert_eq!(
            floored.n0,
            minimal_sample_size(0.1, 0.05, 2).unwrap() as usize
        );
    }

    #[test]
    fn point_mass_jumps_then_stays() {
        let env = point_mass_env(vec![1.0, 0.0], Label::Benign);
        let problem = ProblemSpec::new(2, 0.1, 0.05).unwrap();
        let options = RunOptions {
            n_eval: 100,
            estimate_contraction: false,
            ..RunOptions::default()
        };
        let stopping = StoppingRule {
            max_steps: 10,
            residual_tol: 1e-12,
            patience: 3,
        };
        let trace = run(&env, &problem, &Schedule::default(), &stopping, &options, 1).unwrap();
        assert_eq!(trace.states[1].iterate, vec![1.0, 0.0]);
        assert_eq!(trace.states[0].residual, Some(1.0));
        for s in &trace.states[1..trace.states.len() - 1] {
            assert_eq!(s.residual, Some(0.0));
        }
        assert!(trace.summary.converged);
        assert_eq!(trace.steps(), 4);
        assert_eq!(trace.states[0].violation_estimate, 1.0);
        assert_eq!(trace.states[4].violation_estimate, 0.0);
    }

    #[test]
    fn zero_steps_gives_initial_state() {
        let env = point_mass_env(vec![1.0, 0.0], Label::Benign);
        let problem = ProblemSpec::new(2, 0.1, 0.05).unwrap();
        let stopping = StoppingRule {
            max_steps: 0,
            ..StoppingRule::default()
        };
        let options = RunOptions {
            n_eval: 10,
            estimate_contraction: false,
            ..RunOptions::default()
        };
        let trace = run(&env, &problem, &Schedule::default(), &stopping, &options, 0).unwrap();
        assert_eq!(trace.states.len(), 1);
        assert!(!trace.summary.converged);
        assert_eq!(trace.states[0].solver_status, SolverStatus::NotRun);
    }

    #[test]
    fn infeasible_step_retains_iterate() {
        let base = BaselineDistribution::Discrete {
            support: vec![
                WeightedScenario {
                    features: vec![1.0],
                    label: Label::Benign,
                    weight: 0.5,
                },
                WeightedScenario {
                    features: vec![1.0],
                    label: Label::Malicious,
                    weight: 0.5,
                },
            ],
        };
        let env = EnvironmentMap::static_env(base).unwrap();
        let problem = ProblemSpec::new(1, 0.1, 0.05).unwrap();
        let options = RunOptions {
            n_eval: 10,
            initial: Some(vec![0.25]),
            estimate_contraction: false,
            ..RunOptions::default()
        };
        let it = StochasticIteration::new(&env, problem, Schedule::default(), options, 3).unwrap();
        let mut s0 = it.initial_state().unwrap();
        let s1 = it.step_stochastic(&mut s0).unwrap();
        assert_eq!(s0.solver_status, SolverStatus::InfeasibleRetained);
        assert_eq!(s1.iterate, vec![0.25]);
        assert_eq!(s0.residual, Some(0.0));
    }

    #[test]
    fn deterministic_affine_toy() {
        let tr = run_deterministic(|x| vec![0.5 * x[0] + 1.0], vec![0.0], 40, 0.0);
        for (t, x) in tr.iterates.iter().enumerate() {
            assert!(((x[0] - 2.0).abs() - 2.0 * 0.5f64.powi(t as i32)).abs() <= 1e-12);
        }
    }

    #[test]
    fn deterministic_identity_and_linear() {
        let tr = run_deterministic(|x| x.to_vec(), vec![3.0], 10, 1e-9);
        assert!(tr.converged);
        assert_eq!(tr.residuals, vec![0.0]);

        let tr = run_deterministic(|x| vec![0.9 * x[0]], vec![1.0], 1000, 1e-6);
        assert!(tr.converged);
        assert_eq!(tr.steps(), 132);
        assert!(tr.final_iterate()[0].abs() <= 1e-6);
    }

    #[test]
    fn contraction_estimates() {
        let pairs = vec![(vec![0.0], vec![1.0]), (vec![-3.0], vec![5.0])];
        let k = estimate_contraction(|x| Ok(vec![0.5 * x[0] + 1.0]), &pairs).unwrap();
        assert!((k - 0.5).abs() < 1e-15);
        let k = estimate_contraction(|_| Ok(vec![4.0]), &pairs).unwrap();
        assert_eq!(k, 0.0);
        assert!(estimate_contraction(|x| Ok(x.to_vec()), &[(vec![1.0], vec![1.0])]).is_err());
    }

    #[test]
    fn trace_round_trip() {
        let base = BaselineDistribution::Discrete {
            support: vec![
                WeightedScenario {
                    features: vec![1.0, 0.3],
                    label: Label::Benign,
                    weight: 0.5,
                },
                WeightedScenario {
                    features: vec![-0.7, -1.1],
                    label: Label::Malicious,
                    weight: 0.5,
                },
            ],
        };
        let env = EnvironmentMap::new(base, ResponseParams::new(2.0, 1.0)).unwrap();
        let problem = ProblemSpec::new(2, 0.1, 0.05).unwrap();
        let options = RunOptions {
            n_eval: 200,
            record_snapshots: true,
            ..RunOptions::default()
        };
        let stopping = StoppingRule {
            max_steps: 3,
            residual_tol: 0.0,
            patience: 1,
        };
        let mut trace = run(&env, &problem, &Schedule::default(), &stopping, &options, 9).unwrap();
        trace.config = Some(serde_json::json!({"note": "x"}));
        let text = trace.to_jsonl_string();
        let back = Trace::read_jsonl(text.as_bytes()).unwrap();
        let mut expected = trace.clone();
        expected.summary.wallclock_secs = 0.0;
        assert_eq!(back, expected);
    }

    #[test]
    fn malformed_trace_reports_line() {
        let text = "{\"record\":\"header\",\"seed\":1}\nnot json\n";
        let err = Trace::read_jsonl(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Trace { line: 2, .. }));
        let err = Trace::read_jsonl("{\"record\":\"header\",\"seed\":1}\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("summary"));
    }
}
