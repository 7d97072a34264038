//! Performative chance-constrained optimization with the scenario approach.
//!
//! * [`bounds`]: binomial-tail sample-size bounds.
//! * [`scenario_solver`]: strictly convex QP with affine scenario constraints.
//! * [`environment`]: decision-dependent distributions `w -> P_w`.
//! * [`fixed_point`]: deterministic and stochastic best-response iteration.
//! * [`game`]: discrete-support KL-regularized agent and Nash search.
//! * [`config`]: experiment and game configuration files.
//! * [`export`]: CSV views of a trace.

pub mod bounds;
pub mod config;
pub mod environment;
pub mod error;
pub mod export;
pub mod fixed_point;
pub mod game;
pub mod problem;
pub mod rng;
pub mod scenario_solver;

pub use error::{Error, Result};
