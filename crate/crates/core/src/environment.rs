//! Decision-dependent data generation.
//!
//! A baseline distribution `P0` over labeled scenarios `(xi0, y)` is pushed
//! forward through the strategic response
//!
//! ```text
//!     xi = xi0 + sign * y * alpha(|w|) * w,      alpha(r) = 1 / (lambda + kappa r)
//! ```
//!
//! to give the distribution `P_w` induced by a deployed classifier `w`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::scenario_solver::dot;

/// Intent label: `-1` malicious, `+1` benign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Malicious,
    Benign,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Malicious => -1.0,
            Label::Benign => 1.0,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(Label::Malicious),
            1 => Ok(Label::Benign),
            other => Err(format!("label must be -1 or +1, got {other}")),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Malicious => -1,
            Label::Benign => 1,
        }
    }
}

/// A labeled sample: embedding `features` and intent `label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Scenario {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Scenario { features, label }
    }

    /// Signed margin `y <w, xi>`.
    pub fn margin(&self, w: &[f64]) -> f64 {
        self.label.value() * dot(w, &self.features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedScenario {
    pub features: Vec<f64>,
    pub label: Label,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub label: Label,
    pub mean: Vec<f64>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallComponent {
    pub label: Label,
    pub center: Vec<f64>,
    pub radius: f64,
    pub probability: f64,
}

/// The baseline law `P0` of unresponded scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineDistribution {
    /// Finite support table.
    Discrete { support: Vec<WeightedScenario> },
    /// Labeled Gaussian components sharing one diagonal covariance.
    GaussianMixture {
        components: Vec<GaussianComponent>,
        variances: Vec<f64>,
    },
    /// Labeled components uniform on Euclidean balls.
    BallMixture { components: Vec<BallComponent> },
}

const MASS_TOL: f64 = 1e-12;

impl BaselineDistribution {
    pub fn dim(&self) -> usize {
        match self {
            BaselineDistribution::Discrete { support } => {
                support.first().map_or(0, |s| s.features.len())
            }
            BaselineDistribution::GaussianMixture { variances, .. } => variances.len(),
            BaselineDistribution::BallMixture { components } => {
                components.first().map_or(0, |c| c.center.len())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::invalid(
                "baseline",
                "empty support or zero dimension",
            ));
        }
        let check_dim = |field: String, len: usize| -> Result<()> {
            if len != dim {
                Err(Error::invalid(
                    field,
                    format!("expected dimension {dim}, found {len}"),
                ))
            } else {
                Ok(())
            }
        };
        let weights: Vec<f64> = match self {
            BaselineDistribution::Discrete { support } => {
                for (i, s) in support.iter().enumerate() {
                    check_dim(format!("baseline.support[{i}].features"), s.features.len())?;
                }
                support.iter().map(|s| s.weight).collect()
            }
            BaselineDistribution::GaussianMixture {
                components,
                variances,
            } => {
                for (i, v) in variances.iter().enumerate() {
                    if !(v.is_finite() && *v > 0.0) {
                        return Err(Error::invalid(
                            format!("baseline.variances[{i}]"),
                            format!("must be strictly positive, got {v}"),
                        ));
                    }
                }
                for (i, c) in components.iter().enumerate() {
                    check_dim(format!("baseline.components[{i}].mean"), c.mean.len())?;
                }
                components.iter().map(|c| c.probability).collect()
            }
            BaselineDistribution::BallMixture { components } => {
                for (i, c) in components.iter().enumerate() {
                    check_dim(format!("baseline.components[{i}].center"), c.center.len())?;
                    if !(c.radius.is_finite() && c.radius >= 0.0) {
                        return Err(Error::invalid(
                            format!("baseline.components[{i}].radius"),
                            format!("must be nonnegative, got {}", c.radius),
                        ));
                    }
                }
                components.iter().map(|c| c.probability).collect()
            }
        };
        if weights.is_empty() {
            return Err(Error::invalid("baseline", "no components"));
        }
        for (i, w) in weights.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid(
                    format!("baseline weight {i}"),
                    format!("must be nonnegative, got {w}"),
                ));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(
                "baseline",
                format!("weights must sum to 1, got {total}"),
            ));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        match self {
            BaselineDistribution::Discrete { support } => {
                support.iter().map(|s| s.weight).collect()
            }
            BaselineDistribution::GaussianMixture { components, .. } => {
                components.iter().map(|c| c.probability).collect()
            }
            BaselineDistribution::BallMixture { components } => {
                components.iter().map(|c| c.probability).collect()
            }
        }
    }

    /// Draws one baseline scenario.
    pub fn sample<R: Rng + ?Sized>(&self, cumulative: &[f64], rng: &mut R) -> Scenario {
        let u: f64 = rng.random();
        let k = cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1);
        match self {
            BaselineDistribution::Discrete { support } => {
                let s = &support[k];
                Scenario::new(s.features.clone(), s.label)
            }
            BaselineDistribution::GaussianMixture {
                components,
                variances,
            } => {
                let c = &components[k];
                let features = c
                    .mean
                    .iter()
                    .zip(variances)
                    .map(|(m, v)| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + v.sqrt() * z
                    })
                    .collect();
                Scenario::new(features, c.label)
            }
            BaselineDistribution::BallMixture { components } => {
                let c = &components[k];
                let d = c.center.len();
                let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                let norm = dot(&dir, &dir).sqrt().max(f64::MIN_POSITIVE);
                let u: f64 = rng.random();
                let rad = c.radius * u.powf(1.0 / d as f64);
                let features = c
                    .center
                    .iter()
                    .zip(&dir)
                    .map(|(x, g)| x + rad * g / norm)
                    .collect();
                Scenario::new(features, c.label)
            }
        }
    }

    fn cumulative(&self) -> Vec<f64> {
        self.weights()
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    }
}

/// Which labels adapt to the deployed classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RespondLabels {
    #[default]
    Both,
    MaliciousOnly,
}

/// Parameters of the saturating response `alpha(r) = 1 / (lambda + kappa r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseParams {
    pub lambda: f64,
    pub kappa: f64,
    #[serde(default = "default_sign")]
    pub sign: i8,
    #[serde(default)]
    pub respond_labels: RespondLabels,
}

fn default_sign() -> i8 {
    1
}

impl ResponseParams {
    pub fn new(lambda: f64, kappa: f64) -> Self {
        ResponseParams {
            lambda,
            kappa,
            sign: 1,
            respond_labels: RespondLabels::Both,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid(
                "response.lambda",
                format!("must be positive, got {}", self.lambda),
            ));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::invalid(
                "response.kappa",
                format!("must be nonnegative, got {}", self.kappa),
            ));
        }
        if self.sign != 1 && self.sign != -1 {
            return Err(Error::invalid(
                "response.sign",
                format!("must be +1 or -1, got {}", self.sign),
            ));
        }
        Ok(())
    }

    fn responds(&self, label: Label) -> bool {
        match self.respond_labels {
            RespondLabels::Both => true,
            RespondLabels::MaliciousOnly => label == Label::Malicious,
        }
    }
}

/// `alpha(r) = 1 / (lambda + kappa r)`.
pub fn alpha(response: &ResponseParams, r: f64) -> f64 {
    1.0 / (response.lambda + response.kappa * r)
}

/// The map `w -> P_w`. A missing response is the static environment
/// (`alpha = 0`, `P_w = P0` for every `w`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMap {
    pub baseline: BaselineDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ResponseParams>,
}

impl EnvironmentMap {
    pub fn new(baseline: BaselineDistribution, response: ResponseParams) -> Result<Self> {
        let env = EnvironmentMap {
            baseline,
            response: Some(response),
        };
        env.validate()?;
        Ok(env)
    }

    pub fn static_env(baseline: BaselineDistribution) -> Result<Self> {
        let env = EnvironmentMap {
            baseline,
            response: None,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        if let Some(r) = &self.response {
            r.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.baseline.dim()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            })
        }
    }

    /// Feature displacement applied to label `label` under decision `w`.
    fn shift_scale(&self, w: &[f64], label: Label) -> f64 {
        match &self.response {
            Some(r) if r.responds(label) => {
                let norm = dot(w, w).sqrt();
                f64::from(r.sign) * label.value() * alpha(r, norm)
            }
            _ => 0.0,
        }
    }

    fn respond_unchecked(&self, w: &[f64], mut s: Scenario) -> Scenario {
        let scale = self.shift_scale(w, s.label);
        if scale != 0.0 {
            for (x, wi) in s.features.iter_mut().zip(w) {
                *x += scale * wi;
            }
        }
        s
    }
}

/// Strategic response of one scenario to the deployed decision `w`.
pub fn respond(env: &EnvironmentMap, w: &[f64], s: &Scenario) -> Result<Scenario> {
    env.check_dim(w.len())?;
    env.check_dim(s.features.len())?;
    Ok(env.respond_unchecked(w, s.clone()))
}

/// Draws `n` i.i.d. scenarios from `P_w`. Sample `i` depends only on
/// `(key, i)`.
pub fn sample_induced(
    env: &EnvironmentMap,
    w: &[f64],
    n: usize,
    key: StreamKey,
) -> Result<Vec<Scenario>> {
    env.check_dim(w.len())?;
    let cumulative = env.baseline.cumulative();
    Ok((0..n as u64)
        .map(|i| {
            let mut rng = key.rng(i);
            let s = env.baseline.sample(&cumulative, &mut rng);
            env.respond_unchecked(w, s)
        })
        .collect())
}

/// How a violation probability is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationMode {
    /// Sum of the weights of violating support points; discrete baselines only.
    ExactDiscrete,
    /// Fraction of `n` fresh draws that violate.
    MonteCarlo { n: usize, key: StreamKey },
}

/// `P_{w_env}(y <w_eval, xi> < 1)`.
pub fn violation_probability(
    env: &EnvironmentMap,
    w_eval: &[f64],
    w_env: &[f64],
    mode: ViolationMode,
) -> Result<f64> {
    env.check_dim(w_eval.len())?;
    env.check_dim(w_env.len())?;
    match mode {
        ViolationMode::ExactDiscrete => {
            let BaselineDistribution::Discrete { support } = &env.baseline else {
                return Err(Error::ModeMismatch(
                    "exact evaluation requires a discrete baseline".into(),
                ));
            };
            let mut mass = 0.0;
            for s in support {
                let moved =
                    env.respond_unchecked(w_env, Scenario::new(s.features.clone(), s.label));
                if moved.margin(w_eval) < 1.0 {
                    mass += s.weight;
                }
            }
            Ok(mass.clamp(0.0, 1.0))
        }
        ViolationMode::MonteCarlo { n, key } => {
            if n == 0 {
                return Err(Error::invalid("n_eval", "must be at least 1"));
            }
            let cumulative = env.baseline.cumulative();
            let violations = (0..n as u64)
                .filter(|&i| {
                    let mut rng = key.rng(i);
                    let s = env.baseline.sample(&cumulative, &mut rng);
                    env.respond_unchecked(w_env, s).margin(w_eval) < 1.0
                })
                .count();
            Ok(violations as f64 / n as f64)
        }
    }
}

/// Residual of `y<w, xi> = y<w, xi0> + alpha(|w|) |w|^2` for one scenario.
pub fn margin_identity_check(env: &EnvironmentMap, w: &[f64], s: &Scenario) -> Result<f64> {
    let moved = respond(env, w, s)?;
    let norm_sq = dot(w, w);
    let a = match &env.response {
        Some(r) => alpha(r, norm_sq.sqrt()),
        None => 0.0,
    };
    let lhs = moved.margin(w);
    let rhs = s.margin(w) + a * norm_sq;
    Ok((lhs - rhs).abs())
}
