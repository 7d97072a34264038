//! Experiment and game configuration files (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentMap;
use crate::error::{Error, Result};
use crate::fixed_point::{RunOptions, Schedule, StochasticIteration, StoppingRule, Trace};
use crate::game::{AgentSpec, ConstraintModel, DiscreteMeasure, GameSpec, ObjectiveModel};
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_eval: usize,
    #[serde(default = "default_eval_offset")]
    pub eval_seed_offset: u64,
    #[serde(default)]
    pub record_snapshots: bool,
    #[serde(default = "default_true")]
    pub estimate_contraction: bool,
}

fn default_eval_offset() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

/// One stochastic best-response experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub problem: ProblemSpec,
    pub environment: EnvironmentMap,
    pub schedule: Schedule,
    pub stopping: StoppingRule,
    pub evaluation: EvaluationConfig,
    /// Starting decision; the origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let prefixed = |section: &str, e: Error| match e {
            Error::InvalidParameter { field, reason } if !field.starts_with(section) => {
                Error::InvalidParameter {
                    field: format!("{section}.{field}"),
                    reason,
                }
            }
            other => other,
        };
        self.problem.validate()?;
        self.environment
            .validate()
            .map_err(|e| prefixed("environment", e))?;
        if self.environment.dim() != self.problem.dim {
            return Err(Error::invalid(
                "environment.baseline",
                format!(
                    "dimension {} differs from problem.dim = {}",
                    self.environment.dim(),
                    self.problem.dim
                ),
            ));
        }
        self.schedule.validate(self.problem.dim)?;
        self.stopping.validate()?;
        if self.evaluation.n_eval == 0 {
            return Err(Error::invalid("evaluation.n_eval", "must be at least 1"));
        }
        if let Some(w0) = &self.initial {
            if w0.len() != self.problem.dim {
                return Err(Error::invalid(
                    "initial",
                    format!("expected {} entries, found {}", self.problem.dim, w0.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            n_eval: self.evaluation.n_eval,
            eval_seed_offset: self.evaluation.eval_seed_offset,
            record_snapshots: self.evaluation.record_snapshots,
            initial: self.initial.clone(),
            estimate_contraction: self.evaluation.estimate_contraction,
        }
    }

    pub fn iteration(&self) -> Result<StochasticIteration<'_>> {
        StochasticIteration::new(
            &self.environment,
            self.problem,
            self.schedule,
            self.run_options(),
            self.seed,
        )
    }

    /// Runs the experiment and embeds this config in the trace header.
    pub fn run(&self) -> Result<Trace> {
        let mut trace = self.iteration()?.run(&self.stopping)?;
        trace.config = Some(serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?);
        Ok(trace)
    }
}

/// Evenly spaced values `start, ..., stop` (`count` of them).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => return Vec::new(),
            1 => return vec![self.start],
            _ => {}
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| self.start + step * i as f64)
            .collect()
    }
}

/// A toy game file. The decision grid is either listed explicitly or given
/// as the Cartesian product of axes (first axis varies slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_grid: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_axes: Option<Vec<GridAxis>>,
    pub epsilon: f64,
    #[serde(default)]
    pub gamma: f64,
    pub objective: ObjectiveModel,
    pub constraint: ConstraintModel,
    pub agent: AgentSpec,
    pub baseline: DiscreteMeasure,
}

impl GameConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds and validates the game.
    pub fn to_game(&self) -> Result<GameSpec> {
        let grid = match (&self.decision_grid, &self.grid_axes) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "decision_grid",
                    "give either decision_grid or grid_axes, not both",
                ))
            }
            (Some(g), None) => g.clone(),
            (None, Some(axes)) => cartesian(axes),
            (None, None) => Vec::new(),
        };
        let game = GameSpec {
            decision_grid: grid,
            agent: self.agent.clone(),
            baseline: self.baseline.clone(),
            constraint: self.constraint.clone(),
            gamma: self.gamma,
            epsilon: self.epsilon,
            objective: self.objective.clone(),
        };
        game.validate()?;
        Ok(game)
    }
}

fn cartesian(axes: &[GridAxis]) -> Vec<Vec<f64>> {
    if axes.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let vals = axis.values();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                vals.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}
