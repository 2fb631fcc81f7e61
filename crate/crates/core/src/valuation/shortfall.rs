use super::distribution::FiniteDistribution;
use super::utility::{Utility, MAX_DOUBLINGS};
use super::ValuationError;

/// Default width of the final bisection bracket.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Utility-based shortfall `ρ(X) = sup{m : E[u(X − m)] ≥ x0}`.
///
/// The reference root `y0 = u⁻¹(x0)` is solved once at construction; `ρ(0) = −y0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shortfall {
    utility: Utility,
    x0: f64,
    y0: f64,
}

impl Shortfall {
    pub fn new(utility: Utility, x0: f64) -> Result<Self, ValuationError> {
        utility.validate()?;
        let y0 = utility.inverse(x0)?;
        Ok(Self { utility, x0, y0 })
    }

    /// `u(x) = x` at acceptance level 0: the expected value.
    pub fn risk_neutral() -> Self {
        Self { utility: Utility::Linear, x0: 0.0, y0: 0.0 }
    }

    pub fn utility(&self) -> &Utility {
        &self.utility
    }

    pub fn acceptance_level(&self) -> f64 {
        self.x0
    }

    pub fn reference_root(&self) -> f64 {
        self.y0
    }

    /// `E^μ[u(X − m)] − x0`.
    pub fn residual(&self, values: &[f64], probs: &[f64], m: f64) -> f64 {
        values.iter().zip(probs).map(|(&x, &p)| p * self.utility.value(x - m)).sum::<f64>() - self.x0
    }

    pub fn value(&self, dist: &FiniteDistribution, tol: f64) -> Result<f64, ValuationError> {
        self.value_of(dist.values(), dist.probs(), tol)
    }

    /// Shortfall of the outcomes `values` under `probs`, assumed already validated.
    ///
    /// Bisects on `m` until the bracket is no wider than `tol` (or stops shrinking in floating
    /// point) and returns its midpoint.
    pub fn value_of(&self, values: &[f64], probs: &[f64], tol: f64) -> Result<f64, ValuationError> {
        if !(tol > 0.0) {
            return Err(ValuationError::Domain(format!("tolerance must be positive, got {tol}")));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (&x, &p) in values.iter().zip(probs) {
            if p > 0.0 {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(ValuationError::InvalidDistribution("no finite outcome with positive probability".into()));
        }
        if lo == hi {
            return Ok(lo - self.y0);
        }
        // u(X − m) ≥ u(y0 + 1) > x0 at the left end, < x0 at the right end
        let g = |m: f64| self.residual(values, probs, m);
        let mut left = lo - self.y0 - 1.0;
        let mut right = hi - self.y0 + 1.0;
        let mut step = right - left;
        let mut doublings = 0;
        while !(g(left) >= 0.0) {
            left -= step;
            step *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(ValuationError::BracketExpansion);
            }
        }
        step = right - left;
        doublings = 0;
        while !(g(right) <= 0.0) {
            right += step;
            step *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(ValuationError::BracketExpansion);
            }
        }
        while right - left > tol {
            let mid = 0.5 * (left + right);
            if mid <= left || mid >= right {
                break;
            }
            let gm = g(mid);
            if gm > 0.0 {
                left = mid;
            } else if gm < 0.0 {
                right = mid;
            } else {
                return Ok(mid);
            }
        }
        Ok(0.5 * (left + right))
    }

    /// `ρ(X) − ρ(0) = ρ(X) + y0`: a subjective mean lying in `[min X, max X]`.
    pub fn centralized(&self, dist: &FiniteDistribution, tol: f64) -> Result<f64, ValuationError> {
        Ok(self.value(dist, tol)? + self.y0)
    }
}

pub fn shortfall_value(x: &FiniteDistribution, s: &Shortfall, tol: f64) -> Result<f64, ValuationError> {
    s.value(x, tol)
}

pub fn centralized_value(x: &FiniteDistribution, s: &Shortfall, tol: f64) -> Result<f64, ValuationError> {
    s.centralized(x, tol)
}

/// Probability `w(p)` a risk-neutral agent would need to assign to `x1` to value the gamble
/// `{x1 w.p. p, x2 otherwise}` the way `s` does.
pub fn subjective_probability(x1: f64, x2: f64, p: f64, s: &Shortfall, tol: f64) -> Result<f64, ValuationError> {
    if !(x1 > x2) {
        return Err(ValuationError::Domain(format!("need x1 > x2, got x1 = {x1}, x2 = {x2}")));
    }
    let gamble = FiniteDistribution::two_point(x1, x2, p)?;
    let subjective_mean = s.centralized(&gamble, tol)?;
    Ok((subjective_mean - x2) / (x1 - x2))
}
