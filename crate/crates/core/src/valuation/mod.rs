//! Utility functions and the utility-based shortfall valuation.
//!
//! A shortfall `ρ(X) = sup{m : E[u(X − m)] ≥ x0}` is monotone and translation invariant for
//! any continuous, strictly increasing `u`; concave `u` gives a risk-averse valuation and convex
//! `u` a risk-seeking one. All types here are immutable after construction.

mod distribution;
mod shortfall;
mod utility;

use thiserror::Error;

pub use distribution::{FiniteDistribution, NORMALIZE_TOLERANCE};
pub use shortfall::{
    centralized_value, shortfall_value, subjective_probability, Shortfall, DEFAULT_TOL,
};
pub use utility::{
    eval_utility, linearize_near_zero, slope_bounds, truncate, truncation_knots, NearZeroScheme,
    SlopeBounds, SlopeViolation, Utility, DEFAULT_PHI, MAX_DOUBLINGS, MIN_TRUNCATION_SLOPE,
    UNBOUNDED_SLOPE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValuationError {
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("invalid utility parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("utility never reaches acceptance level {0}")]
    NoReferenceRoot(f64),
    #[error("shortfall bracket did not capture a sign change after {MAX_DOUBLINGS} doublings")]
    BracketExpansion,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("domain error: {0}")]
    Domain(String),
}
