use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chance-constrained problem data. The objective is `|w|^2 / 2` and the
/// constraint function is the unit-margin `g(w, (xi, y)) = 1 - y <w, xi>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dim: usize,
    /// Tolerated violation probability.
    pub epsilon: f64,
    /// Constraint threshold; only the margin convention `gamma = 0` is supported.
    #[serde(default)]
    pub gamma: f64,
    /// Confidence parameter of the scenario bound.
    pub beta: f64,
}

impl ProblemSpec {
    pub fn new(dim: usize, epsilon: f64, beta: f64) -> Result<Self> {
        let p = ProblemSpec {
            dim,
            epsilon,
            gamma: 0.0,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("problem.dim", "must be at least 1"));
        }
        for (field, v) in [
            ("problem.epsilon", self.epsilon),
            ("problem.beta", self.beta),
        ] {
            if !(v.is_finite() && v > 0.0 && v < 1.0) {
                return Err(Error::invalid(
                    field,
                    format!("must lie in (0, 1), got {v}"),
                ));
            }
        }
        if self.gamma != 0.0 {
            return Err(Error::invalid(
                "problem.gamma",
                format!(
                    "only the margin convention gamma = 0 is supported, got {}",
                    self.gamma
                ),
            ));
        }
        Ok(())
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        0.5 * w.iter().map(|x| x * x).sum::<f64>()
    }
}
