use super::ValuationError;

/// Probabilities whose sum is off by more than this are rejected instead of renormalized.
pub const NORMALIZE_TOLERANCE: f64 = 1e-9;

/// A real-valued random variable over a finite event set: outcomes `X(i)` with
/// probabilities `μ(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(outcomes: impl IntoIterator<Item = (f64, f64)>) -> Result<Self, ValuationError> {
        let (values, probs) = outcomes.into_iter().unzip();
        Self::from_parts(values, probs)
    }

    pub fn from_parts(values: Vec<f64>, mut probs: Vec<f64>) -> Result<Self, ValuationError> {
        if values.is_empty() {
            return Err(ValuationError::InvalidDistribution("no outcomes".into()));
        }
        if values.len() != probs.len() {
            return Err(ValuationError::InvalidDistribution(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(ValuationError::InvalidDistribution(format!("non-finite outcome {v}")));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(ValuationError::InvalidDistribution(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZE_TOLERANCE {
            return Err(ValuationError::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        if total != 1.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Ok(Self { values, probs })
    }

    /// Point mass at `value`.
    pub fn point(value: f64) -> Self {
        Self { values: vec![value], probs: vec![1.0] }
    }

    /// Two-outcome gamble: `high` with probability `p`, `low` otherwise.
    pub fn two_point(high: f64, low: f64, p: f64) -> Result<Self, ValuationError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ValuationError::Domain(format!("probability {p} outside [0, 1]")));
        }
        Self::from_parts(vec![high, low], vec![p, 1.0 - p])
    }

    /// Uniform distribution over a sample, e.g. an observed reward history.
    pub fn empirical(samples: &[f64]) -> Result<Self, ValuationError> {
        let n = samples.len();
        if n == 0 {
            return Err(ValuationError::InvalidDistribution("empty sample".into()));
        }
        Self::from_parts(samples.to_vec(), vec![1.0 / n as f64; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.outcomes().map(|(x, p)| x * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.outcomes().map(|(x, p)| p * (x - m) * (x - m)).sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same event distribution, outcomes transformed by `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&x| f(x)).collect(), probs: self.probs.clone() }
    }

    /// `X + c·1`.
    pub fn shift(&self, c: f64) -> Self {
        self.map(|x| x + c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_probabilities() {
        assert!(FiniteDistribution::new([(1.0, 0.5), (2.0, 0.4)]).is_err());
        assert!(FiniteDistribution::new([(1.0, -0.1), (2.0, 1.1)]).is_err());
        assert!(FiniteDistribution::new(Vec::<(f64, f64)>::new()).is_err());
        assert!(FiniteDistribution::new([(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn renormalizes_small_drift() {
        let d = FiniteDistribution::new([(1.0, 0.5 + 1e-10), (2.0, 0.5)]).unwrap();
        let total: f64 = d.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moments() {
        let d = FiniteDistribution::new([(2.0, 0.25), (-1.0, 0.75)]).unwrap();
        assert!((d.mean() + 0.25).abs() < 1e-15);
        assert_eq!(d.min(), -1.0);
        assert_eq!(d.max(), 2.0);
        assert!((d.variance() - 1.6875).abs() < 1e-12);
    }
}
