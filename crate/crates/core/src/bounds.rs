//! Sample-size bounds for the scenario approach.
//!
//! For a convex scenario program in `d` decision variables with a unique
//! optimizer, the probability (over the draw of `N` i.i.d. scenarios) that
//! the scenario solution violates the chance constraint by more than `ε` is
//! at most the binomial tail
//!
//! ```text
//!     sum_{i=0}^{d-1} C(N, i) ε^i (1-ε)^(N-i)
//! ```
//!
//! [`minimal_sample_size`] returns the smallest `N` for which that tail is at
//! most a confidence level `β`.

use crate::error::{Error, Result};

/// Parameters of one binomial-tail evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    pub n_samples: u64,
    pub epsilon: f64,
    pub beta: f64,
    pub dim: usize,
}

impl BoundQuery {
    pub fn new(n_samples: u64, epsilon: f64, beta: f64, dim: usize) -> Result<Self> {
        let q = BoundQuery {
            n_samples,
            epsilon,
            beta,
            dim,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        validate_probability("epsilon", self.epsilon)?;
        validate_probability("beta", self.beta)?;
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        Ok(())
    }
}

fn validate_probability(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            field,
            format!("must lie in (0, 1), got {value}"),
        ))
    }
}

/// Evaluates `P[Binomial(N, ε) <= d - 1]`.
pub fn evaluate_binomial_tail(q: &BoundQuery) -> Result<f64> {
    q.validate()?;
    Ok(binomial_tail(q.n_samples, q.epsilon, q.dim))
}

/// Unchecked tail evaluation; parameters are assumed valid.
///
/// Terms are generated in log space through the ratio
/// `C(N,i)/C(N,i-1) = (N-i+1)/i` and accumulated with Neumaier summation.
fn binomial_tail(n: u64, epsilon: f64, dim: usize) -> f64 {
    let last = (dim as u64 - 1).min(n);
    if last == n {
        // The sum covers the whole binomial distribution.
        return 1.0;
    }
    let nf = n as f64;
    let log_odds = epsilon.ln() - (-epsilon).ln_1p();
    let mut log_term = nf * (-epsilon).ln_1p();
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for i in 0..=last {
        if i > 0 {
            let k = i as f64;
            log_term += ((nf - k + 1.0) / k).ln() + log_odds;
        }
        let term = log_term.exp();
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    (sum + comp).clamp(0.0, 1.0)
}

/// Smallest `N` with `evaluate_binomial_tail(N, ε, d) <= β`.
///
/// The tail equals one for every `N < d`, so the search starts at `N = d`,
/// brackets exponentially and then bisects.
pub fn minimal_sample_size(epsilon: f64, beta: f64, dim: usize) -> Result<u64> {
    BoundQuery {
        n_samples: 0,
        epsilon,
        beta,
        dim,
    }
    .validate()?;
    let satisfied = |n: u64| binomial_tail(n, epsilon, dim) <= beta;

    let mut lo = dim as u64;
    if satisfied(lo) {
        return Ok(lo);
    }
    let mut step = 1u64;
    let mut hi = lo + step;
    while !satisfied(hi) {
        lo = hi;
        step = step
            .checked_mul(2)
            .ok_or_else(|| Error::invalid("epsilon", "required sample size overflows u64"))?;
        hi = lo
            .checked_add(step)
            .ok_or_else(|| Error::invalid("epsilon", "required sample size overflows u64"))?;
    }
    // Invariant: !satisfied(lo) && satisfied(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if satisfied(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
