use serde::{Deserialize, Serialize};

use crate::learner::UpdateRule;
use crate::valuation::{NearZeroScheme, Utility, DEFAULT_PHI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rsql,
    Eu,
    StandardQ,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::StandardQ, ModelKind::Rsql, ModelKind::Eu];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rsql => "rsql",
            ModelKind::Eu => "eu",
            ModelKind::StandardQ => "standard_q",
        }
    }

    /// Number of free parameters.
    pub fn n_params(self) -> usize {
        match self {
            ModelKind::Rsql => 6,
            ModelKind::Eu => 7,
            ModelKind::StandardQ => 3,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rsql" => Ok(ModelKind::Rsql),
            "eu" => Ok(ModelKind::Eu),
            "standard_q" => Ok(ModelKind::StandardQ),
            _ => Err(format!("unknown model {s:?} (expected rsql, eu or standard_q)")),
        }
    }
}

/// Parameters of any of the three models.
///
/// Fields a model does not estimate hold the values that make it a special case of the
/// risk-sensitive model: `alpha = 1` for RSQL (the rate is absorbed into `k±`), and
/// `k± = alpha`, `l± = 1` for standard Q-learning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub beta: f64,
    pub gamma: f64,
    pub k_plus: f64,
    pub l_plus: f64,
    pub k_minus: f64,
    pub l_minus: f64,
    pub alpha: f64,
}

impl ModelParams {
    pub fn rsql(beta: f64, gamma: f64, k_plus: f64, l_plus: f64, k_minus: f64, l_minus: f64) -> Self {
        Self { beta, gamma, k_plus, l_plus, k_minus, l_minus, alpha: 1.0 }
    }

    pub fn eu(alpha: f64, beta: f64, gamma: f64, k_plus: f64, l_plus: f64, k_minus: f64, l_minus: f64) -> Self {
        Self { beta, gamma, k_plus, l_plus, k_minus, l_minus, alpha }
    }

    pub fn standard(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { beta, gamma, k_plus: alpha, l_plus: 1.0, k_minus: alpha, l_minus: 1.0, alpha }
    }

    /// The polynomial utility with its near-zero linearization.
    pub fn utility(&self) -> Utility {
        Utility::LinearizedNearZero {
            inner: Box::new(Utility::PolynomialMixed {
                k_plus: self.k_plus,
                l_plus: self.l_plus,
                k_minus: self.k_minus,
                l_minus: self.l_minus,
            }),
            phi: DEFAULT_PHI,
            scheme: NearZeroScheme::Linear,
        }
    }

    /// Update rule and learning rate of `model`; the acceptance level is 0.
    pub fn update_rule(&self, model: ModelKind) -> (UpdateRule, f64) {
        match model {
            ModelKind::Rsql => (UpdateRule::RiskSensitive { utility: self.utility(), x0: 0.0 }, 1.0),
            ModelKind::Eu => (UpdateRule::ExpectedUtility { utility: self.utility(), x0: 0.0 }, self.alpha),
            ModelKind::StandardQ => (UpdateRule::Standard, self.alpha),
        }
    }

    /// Checks the parameter domains used by `model`.
    pub fn validate(&self, model: ModelKind) -> Result<(), String> {
        let mut bad = Vec::new();
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            bad.push(format!("β = {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            bad.push(format!("γ = {}", self.gamma));
        }
        if model != ModelKind::StandardQ {
            for (name, v) in [("k+", self.k_plus), ("l+", self.l_plus), ("k-", self.k_minus), ("l-", self.l_minus)] {
                if !(v.is_finite() && v > 0.0) {
                    bad.push(format!("{name} = {v}"));
                }
            }
        }
        if model != ModelKind::Rsql && !(self.alpha > 0.0 && self.alpha <= 1.0) {
            bad.push(format!("α = {}", self.alpha));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(format!("invalid {} parameters: {}", model.name(), bad.join(", ")))
        }
    }
}

/// Box constraints of the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamBounds {
    pub beta_max: f64,
    pub gamma_max: f64,
    pub k: (f64, f64),
    pub l: (f64, f64),
    pub alpha: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self { beta_max: 50.0, gamma_max: 0.99, k: (1e-3, 10.0), l: (0.05, 5.0), alpha: (1e-3, 1.0) }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(u: f64) -> f64 {
    let u = u.clamp(1e-9, 1.0 - 1e-9);
    (u / (1.0 - u)).ln()
}

fn log_scaled(z: f64, (lo, hi): (f64, f64)) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * sigmoid(z)).exp()
}

fn log_scaled_inv(x: f64, (lo, hi): (f64, f64)) -> f64 {
    logit((x.clamp(lo, hi).ln() - lo.ln()) / (hi.ln() - lo.ln()))
}

impl ParamBounds {
    /// Maps unconstrained coordinates to parameters. Coordinate order: RSQL
    /// `(β, γ, k+, l+, k−, l−)`, EU `(α, β, γ, k+, l+, k−, l−)`, standard `(α, β, γ)`.
    pub fn decode(&self, model: ModelKind, z: &[f64]) -> ModelParams {
        let beta = |z: f64| (self.beta_max.ln_1p() * sigmoid(z)).exp_m1();
        let gamma = |z: f64| self.gamma_max * sigmoid(z);
        match model {
            ModelKind::Rsql => ModelParams::rsql(
                beta(z[0]),
                gamma(z[1]),
                log_scaled(z[2], self.k),
                log_scaled(z[3], self.l),
                log_scaled(z[4], self.k),
                log_scaled(z[5], self.l),
            ),
            ModelKind::Eu => ModelParams::eu(
                log_scaled(z[0], self.alpha),
                beta(z[1]),
                gamma(z[2]),
                log_scaled(z[3], self.k),
                log_scaled(z[4], self.l),
                log_scaled(z[5], self.k),
                log_scaled(z[6], self.l),
            ),
            ModelKind::StandardQ => ModelParams::standard(log_scaled(z[0], self.alpha), beta(z[1]), gamma(z[2])),
        }
    }

    /// Inverse of [`decode`](Self::decode), clamping into the bounds first.
    pub fn encode(&self, model: ModelKind, p: &ModelParams) -> Vec<f64> {
        let beta = logit(p.beta.clamp(0.0, self.beta_max).ln_1p() / self.beta_max.ln_1p());
        let gamma = logit(p.gamma / self.gamma_max);
        match model {
            ModelKind::Rsql => vec![
                beta,
                gamma,
                log_scaled_inv(p.k_plus, self.k),
                log_scaled_inv(p.l_plus, self.l),
                log_scaled_inv(p.k_minus, self.k),
                log_scaled_inv(p.l_minus, self.l),
            ],
            ModelKind::Eu => vec![
                log_scaled_inv(p.alpha, self.alpha),
                beta,
                gamma,
                log_scaled_inv(p.k_plus, self.k),
                log_scaled_inv(p.l_plus, self.l),
                log_scaled_inv(p.k_minus, self.k),
                log_scaled_inv(p.l_minus, self.l),
            ],
            ModelKind::StandardQ => vec![log_scaled_inv(p.alpha, self.alpha), beta, gamma],
        }
    }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Point `index` (from 1) of the Halton sequence in `dim ≤ 8` dimensions.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    PRIMES[..dim]
        .iter()
        .map(|&b| {
            let (mut i, mut f, mut r) = (index, 1.0, 0.0);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

/// Unconstrained start points spread over the parameter box.
pub fn halton_starts(model: ModelKind, n: usize) -> Vec<Vec<f64>> {
    (1..=n as u64).map(|i| halton(i, model.n_params()).into_iter().map(logit).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transforms_round_trip_and_respect_bounds() {
        let b = ParamBounds::default();
        let p = ModelParams::eu(0.2, 3.0, 0.8, 0.5, 1.5, 2.0, 0.3);
        let back = b.decode(ModelKind::Eu, &b.encode(ModelKind::Eu, &p));
        for (x, y) in [
            (p.alpha, back.alpha),
            (p.beta, back.beta),
            (p.gamma, back.gamma),
            (p.k_plus, back.k_plus),
            (p.l_plus, back.l_plus),
            (p.k_minus, back.k_minus),
            (p.l_minus, back.l_minus),
        ] {
            assert!((x - y).abs() < 1e-9 * x.max(1.0), "{x} vs {y}");
        }
        for z in [-40.0, 0.0, 40.0] {
            let p = b.decode(ModelKind::Rsql, &[z; 6]);
            assert!((0.0..=50.0).contains(&p.beta));
            assert!((0.0..=0.99).contains(&p.gamma));
            assert!((1e-3..=10.0 + 1e-12).contains(&p.k_plus));
            assert!((0.05 - 1e-15..=5.0 + 1e-12).contains(&p.l_minus));
        }
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
        assert_eq!(halton(3, 1), vec![0.75]);
        assert_eq!(halton_starts(ModelKind::Rsql, 16).len(), 16);
    }

    #[test]
    fn standard_params_nest() {
        let p = ModelParams::standard(0.3, 2.0, 0.9);
        assert_eq!((p.k_plus, p.l_plus, p.k_minus, p.l_minus), (0.3, 1.0, 0.3, 1.0));
        assert!(p.validate(ModelKind::StandardQ).is_ok());
        assert!(ModelParams::rsql(1.0, 0.5, -1.0, 1.0, 1.0, 1.0).validate(ModelKind::Rsql).is_err());
        assert_eq!("eu".parse::<ModelKind>().unwrap(), ModelKind::Eu);
    }
}
