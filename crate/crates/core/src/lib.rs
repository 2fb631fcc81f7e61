//! Risk-sensitive reinforcement learning on finite MDPs.
//!
//! - [`valuation`]: utility functions and utility-based shortfalls.
//! - [`mdp`]: finite MDPs, trajectory sampling and the bundled sequential investment game.
//! - [`solver`]: risk-sensitive value iteration, the ground truth for learners.
//! - [`learner`]: risk-sensitive, expected-utility and standard Q-learning.
//! - [`fitting`]: likelihood replay, maximum-likelihood fits and BIC comparison.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and runs sequentially otherwise.

// `!(x > 0.0)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fitting;
pub mod learner;
pub mod mdp;
pub mod par;
pub mod solver;
pub mod valuation;

/// Seedable generator used by every stochastic operation.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Creates the generator for `seed`.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}

/// Derives an independent stream for sub-task `index` of a seeded job.
pub fn substream(seed: u64, index: u64) -> SimRng {
    use rand::SeedableRng;
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Formats a float with 17 significant digits, enough to round-trip any `f64`. Negative
/// zero is written as `0`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x + 0.0)
    } else {
        x.to_string()
    }
}
