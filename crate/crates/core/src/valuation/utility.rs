use serde::{Deserialize, Serialize};

use super::ValuationError;

/// Scheme used to replace a utility near the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearZeroScheme {
    /// `(x + φ)^l − φ^l` on each polynomial branch.
    Shift,
    /// Chord through `(0, u(0))` and `(±φ, u(±φ))` on `[0, φ)` (and `(−φ, 0]` for mixed utilities).
    #[default]
    Linear,
}

/// A continuous, strictly increasing scalar transform applied to outcomes or TD errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields, from = "UtilityRepr")]
pub enum Utility {
    /// `u(x) = x`.
    Linear,
    /// `u(x) = e^{λx}` for λ > 0 (natural acceptance level 1) and `−e^{λx}` for λ < 0
    /// (natural acceptance level −1). Induces the entropic map `(1/λ)·ln E e^{λX}`.
    Entropic { lambda: f64 },
    /// `u(x) = (e^{λx} − 1)/λ`; λ = −1 is `1 − e^{−x}`, λ = 1 is `e^{x} − 1`.
    Exponential { lambda: f64 },
    /// `(1 − κ)x` for x > 0, `(1 + κ)x` for x ≤ 0.
    PiecewiseLinear { kappa: f64 },
    /// `k₊ x^{l₊}` for x ≥ 0, `−k₋ (−x)^{l₋}` for x < 0.
    PolynomialMixed { k_plus: f64, l_plus: f64, k_minus: f64, l_minus: f64 },
    /// `inner` on `[lower, upper]`, continued linearly with `slope` outside.
    Truncated { inner: Box<Utility>, lower: f64, upper: f64, slope: f64 },
    /// `inner` with its behaviour on `|x| < φ` replaced according to `scheme`.
    LinearizedNearZero {
        inner: Box<Utility>,
        phi: f64,
        #[serde(default)]
        scheme: NearZeroScheme,
    },
}

/// Deserialization mirror of [`Utility`]. Unit variants of internally tagged enums skip the
/// unknown-field check, so `linear` is read as an empty struct variant.
#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum UtilityRepr {
    Linear {},
    Entropic { lambda: f64 },
    Exponential { lambda: f64 },
    PiecewiseLinear { kappa: f64 },
    PolynomialMixed { k_plus: f64, l_plus: f64, k_minus: f64, l_minus: f64 },
    Truncated { inner: Box<Utility>, lower: f64, upper: f64, slope: f64 },
    LinearizedNearZero {
        inner: Box<Utility>,
        phi: f64,
        #[serde(default)]
        scheme: NearZeroScheme,
    },
}

impl From<UtilityRepr> for Utility {
    fn from(r: UtilityRepr) -> Self {
        match r {
            UtilityRepr::Linear {} => Utility::Linear,
            UtilityRepr::Entropic { lambda } => Utility::Entropic { lambda },
            UtilityRepr::Exponential { lambda } => Utility::Exponential { lambda },
            UtilityRepr::PiecewiseLinear { kappa } => Utility::PiecewiseLinear { kappa },
            UtilityRepr::PolynomialMixed { k_plus, l_plus, k_minus, l_minus } => {
                Utility::PolynomialMixed { k_plus, l_plus, k_minus, l_minus }
            }
            UtilityRepr::Truncated { inner, lower, upper, slope } => Utility::Truncated { inner, lower, upper, slope },
            UtilityRepr::LinearizedNearZero { inner, phi, scheme } => Utility::LinearizedNearZero { inner, phi, scheme },
        }
    }
}

impl Utility {
    pub fn polynomial_mixed(
        k_plus: f64,
        l_plus: f64,
        k_minus: f64,
        l_minus: f64,
    ) -> Result<Self, ValuationError> {
        let u = Utility::PolynomialMixed { k_plus, l_plus, k_minus, l_minus };
        u.validate()?;
        Ok(u)
    }

    /// Checks the per-family parameter invariants.
    pub fn validate(&self) -> Result<(), ValuationError> {
        let bad = |msg: String| Err(ValuationError::InvalidParameter(msg));
        match self {
            Utility::Linear => Ok(()),
            Utility::Entropic { lambda } | Utility::Exponential { lambda } => {
                if !lambda.is_finite() || *lambda == 0.0 {
                    bad(format!("exponential-type utility needs finite λ ≠ 0, got {lambda}"))
                } else {
                    Ok(())
                }
            }
            Utility::PiecewiseLinear { kappa } => {
                if kappa.is_finite() && kappa.abs() < 1.0 {
                    Ok(())
                } else {
                    bad(format!("piecewise-linear κ must lie in (−1, 1), got {kappa}"))
                }
            }
            Utility::PolynomialMixed { k_plus, l_plus, k_minus, l_minus } => {
                for (name, v) in
                    [("k_plus", k_plus), ("l_plus", l_plus), ("k_minus", k_minus), ("l_minus", l_minus)]
                {
                    if !(v.is_finite() && *v > 0.0) {
                        return bad(format!("{name} must be positive, got {v}"));
                    }
                }
                Ok(())
            }
            Utility::Truncated { inner, lower, upper, slope } => {
                inner.validate()?;
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return bad(format!("truncation knots must satisfy lower < upper, got [{lower}, {upper}]"));
                }
                if !(slope.is_finite() && *slope > 0.0) {
                    return bad(format!("truncation slope must be positive, got {slope}"));
                }
                Ok(())
            }
            Utility::LinearizedNearZero { inner, phi, scheme } => {
                inner.validate()?;
                if !(phi.is_finite() && *phi > 0.0) {
                    return bad(format!("φ must be positive, got {phi}"));
                }
                if *scheme == NearZeroScheme::Shift && !matches!(**inner, Utility::PolynomialMixed { .. }) {
                    return Err(ValuationError::Unsupported(
                        "shift scheme is only defined for polynomial utilities".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// `u(x)` without input checks; the hot path for learners and solvers.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Utility::Linear => x,
            Utility::Entropic { lambda } => {
                let e = (lambda * x).exp();
                if *lambda > 0.0 {
                    e
                } else {
                    -e
                }
            }
            Utility::Exponential { lambda } => (lambda * x).exp_m1() / lambda,
            Utility::PiecewiseLinear { kappa } => {
                if x > 0.0 {
                    (1.0 - kappa) * x
                } else {
                    (1.0 + kappa) * x
                }
            }
            Utility::PolynomialMixed { k_plus, l_plus, k_minus, l_minus } => {
                if x >= 0.0 {
                    k_plus * x.powf(*l_plus)
                } else {
                    -k_minus * (-x).powf(*l_minus)
                }
            }
            Utility::Truncated { inner, lower, upper, slope } => {
                if x < *lower {
                    inner.value(*lower) + slope * (x - lower)
                } else if x > *upper {
                    inner.value(*upper) + slope * (x - upper)
                } else {
                    inner.value(x)
                }
            }
            Utility::LinearizedNearZero { inner, phi, scheme } => match scheme {
                NearZeroScheme::Linear => {
                    if (0.0..*phi).contains(&x) {
                        let u0 = inner.value(0.0);
                        u0 + x * (inner.value(*phi) - u0) / phi
                    } else if x < 0.0 && x > -phi && inner.is_mixed() {
                        let u0 = inner.value(0.0);
                        u0 + x * (u0 - inner.value(-phi)) / phi
                    } else {
                        inner.value(x)
                    }
                }
                NearZeroScheme::Shift => match **inner {
                    Utility::PolynomialMixed { k_plus, l_plus, k_minus, l_minus } => {
                        if x >= 0.0 {
                            k_plus * ((x + phi).powf(l_plus) - phi.powf(l_plus))
                        } else {
                            -k_minus * ((phi - x).powf(l_minus) - phi.powf(l_minus))
                        }
                    }
                    // rejected by validate()
                    _ => inner.value(x),
                },
            },
        }
    }

    /// Whether the utility has separate gain and loss branches.
    pub fn is_mixed(&self) -> bool {
        matches!(self, Utility::PolynomialMixed { .. })
    }

    /// Solves `u(y) = target` by bisection with geometric bracket expansion.
    pub fn inverse(&self, target: f64) -> Result<f64, ValuationError> {
        if !target.is_finite() {
            return Err(ValuationError::NonFinite(target));
        }
        if let Utility::Linear = self {
            return Ok(target);
        }
        let g = |y: f64| self.value(y) - target;
        let mut lo = -1.0;
        let mut hi = 1.0;
        let mut doublings = 0;
        while g(lo) > 0.0 {
            lo *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(ValuationError::NoReferenceRoot(target));
            }
        }
        doublings = 0;
        while g(hi) < 0.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(ValuationError::NoReferenceRoot(target));
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let gm = g(mid);
            if gm > 0.0 {
                hi = mid;
            } else if gm < 0.0 {
                lo = mid;
            } else {
                return Ok(mid);
            }
        }
        let y = 0.5 * (lo + hi);
        if !g(y).is_finite() {
            return Err(ValuationError::NoReferenceRoot(target));
        }
        Ok(y)
    }

    /// Numerical monotonicity check on a uniform grid of `n` points over `[a, b]`.
    pub fn is_strictly_increasing_on(&self, a: f64, b: f64, n: usize) -> bool {
        let n = n.max(2);
        let h = (b - a) / (n - 1) as f64;
        let mut prev = self.value(a);
        (1..n).all(|i| {
            let v = self.value(a + h * i as f64);
            let ok = v > prev;
            prev = v;
            ok
        })
    }
}

/// Cap on geometric bracket growth in root finders.
pub const MAX_DOUBLINGS: u32 = 60;

/// Checked evaluation of `u(x)`.
pub fn eval_utility(u: &Utility, x: f64) -> Result<f64, ValuationError> {
    if !x.is_finite() {
        return Err(ValuationError::NonFinite(x));
    }
    Ok(u.value(x))
}

/// Slopes above this count as unbounded.
pub const UNBOUNDED_SLOPE: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeViolation {
    NonPositiveLower,
    UnboundedUpper,
}

/// Divided-difference bounds `ε ≤ (u(x) − u(y))/(x − y) ≤ L` on an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeBounds {
    pub lower: f64,
    pub upper: f64,
    pub interval: (f64, f64),
    pub violation: Option<SlopeViolation>,
}

impl SlopeBounds {
    pub fn is_valid(&self) -> bool {
        self.violation.is_none()
    }
}

/// Estimates the slope bounds of `u` over `[a, b]` on a grid of `grid_n` points.
///
/// Every divided difference over a pair of grid points is a convex combination of the
/// adjacent ones, so scanning neighbours gives the same extremes as scanning all pairs.
pub fn slope_bounds(u: &Utility, a: f64, b: f64, grid_n: usize) -> Result<SlopeBounds, ValuationError> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(ValuationError::NonFinite(if a.is_finite() { b } else { a }));
    }
    if a >= b || grid_n < 2 {
        return Err(ValuationError::Domain(format!(
            "slope scan needs a < b and at least 2 points, got [{a}, {b}] with {grid_n}"
        )));
    }
    let h = (b - a) / (grid_n - 1) as f64;
    let xs: Vec<f64> = (0..grid_n).map(|i| if i + 1 == grid_n { b } else { a + h * i as f64 }).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| u.value(x)).collect();
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for i in 1..grid_n {
        let d = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        let d = if d.is_nan() { f64::INFINITY } else { d };
        lower = lower.min(d);
        upper = upper.max(d);
    }
    let violation = if !(lower > 0.0) {
        Some(SlopeViolation::NonPositiveLower)
    } else if !(upper.is_finite() && upper <= UNBOUNDED_SLOPE) {
        Some(SlopeViolation::UnboundedUpper)
    } else {
        None
    };
    Ok(SlopeBounds { lower, upper, interval: (a, b), violation })
}

/// Floor applied to a grid-estimated truncation slope.
pub const MIN_TRUNCATION_SLOPE: f64 = 1e-6;

/// Knots `[y0 − 2R̄/(1−γ), y0 + 2R̄/(1−γ)]` outside which TD errors cannot fall at the optimum.
pub fn truncation_knots(y0: f64, r_bar: f64, gamma: f64) -> (f64, f64) {
    let half = 2.0 * r_bar / (1.0 - gamma);
    (y0 - half, y0 + half)
}

/// Linear continuation of `u` outside the truncation knots derived from `x0`, `R̄` and `γ`.
///
/// When `slope` is `None` the grid-estimated lower slope of `u` on the knot interval is used,
/// floored at [`MIN_TRUNCATION_SLOPE`].
pub fn truncate(
    u: &Utility,
    x0: f64,
    r_bar: f64,
    gamma: f64,
    slope: Option<f64>,
) -> Result<Utility, ValuationError> {
    u.validate()?;
    if !(r_bar.is_finite() && r_bar > 0.0) {
        return Err(ValuationError::InvalidParameter(format!("R̄ must be positive, got {r_bar}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(ValuationError::InvalidParameter(format!("γ must lie in [0, 1), got {gamma}")));
    }
    let y0 = u.inverse(x0)?;
    let (lower, upper) = truncation_knots(y0, r_bar, gamma);
    let slope = match slope {
        Some(s) => s,
        None => slope_bounds(u, lower, upper, 2001)?.lower.max(MIN_TRUNCATION_SLOPE),
    };
    let t = Utility::Truncated { inner: Box::new(u.clone()), lower, upper, slope };
    t.validate()?;
    Ok(t)
}

/// Default φ for near-zero linearization.
pub const DEFAULT_PHI: f64 = 1e-4;

pub fn linearize_near_zero(u: &Utility, phi: f64, scheme: NearZeroScheme) -> Result<Utility, ValuationError> {
    let l = Utility::LinearizedNearZero { inner: Box::new(u.clone()), phi, scheme };
    l.validate()?;
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mix1() -> Utility {
        Utility::polynomial_mixed(0.5, 2.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn family_values() {
        assert_eq!(mix1().value(1.0), 0.5);
        assert_eq!(mix1().value(-2.0), -4.0);
        assert_eq!(Utility::Linear.value(3.7), 3.7);
        assert_eq!(Utility::Entropic { lambda: 1.0 }.value(0.0), 1.0);
        assert_relative_eq!(Utility::Exponential { lambda: -1.0 }.value(1.0), 1.0 - (-1.0f64).exp());
        assert_eq!(Utility::PiecewiseLinear { kappa: 0.5 }.value(2.0), 1.0);
        assert_eq!(Utility::PiecewiseLinear { kappa: 0.5 }.value(-2.0), -3.0);
    }

    #[test]
    fn eval_rejects_non_finite() {
        assert!(matches!(eval_utility(&Utility::Linear, f64::NAN), Err(ValuationError::NonFinite(_))));
        assert!(eval_utility(&Utility::Linear, f64::INFINITY).is_err());
    }

    #[test]
    fn parameter_invariants() {
        assert!(Utility::polynomial_mixed(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(Utility::polynomial_mixed(1.0, 1.0, 1.0, -1.0).is_err());
        assert!(Utility::PiecewiseLinear { kappa: 1.0 }.validate().is_err());
        assert!(Utility::Exponential { lambda: 0.0 }.validate().is_err());
        let t = Utility::Truncated { inner: Box::new(Utility::Linear), lower: 1.0, upper: 1.0, slope: 1.0 };
        assert!(t.validate().is_err());
        let t = Utility::Truncated { inner: Box::new(Utility::Linear), lower: 0.0, upper: 1.0, slope: 0.0 };
        assert!(t.validate().is_err());
        assert!(linearize_near_zero(&Utility::Linear, 0.0, NearZeroScheme::Linear).is_err());
    }

    #[test]
    fn families_are_increasing() {
        let families = [
            Utility::Linear,
            Utility::Entropic { lambda: 0.7 },
            Utility::Entropic { lambda: -0.7 },
            Utility::Exponential { lambda: -1.0 },
            Utility::PiecewiseLinear { kappa: -0.3 },
            mix1(),
            Utility::polynomial_mixed(1.0, 0.5, 1.5, 0.5).unwrap(),
        ];
        for u in &families {
            assert!(u.is_strictly_increasing_on(-5.0, 5.0, 10_001), "{u:?}");
        }
    }

    #[test]
    fn slope_bounds_linear_and_piecewise() {
        let b = slope_bounds(&Utility::Linear, -5.0, 5.0, 101).unwrap();
        assert_eq!((b.lower, b.upper), (1.0, 1.0));
        assert!(b.is_valid());
        let b = slope_bounds(&Utility::PiecewiseLinear { kappa: 0.5 }, -5.0, 5.0, 101).unwrap();
        assert_relative_eq!(b.lower, 0.5, epsilon = 1e-12);
        assert_relative_eq!(b.upper, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn slope_bounds_polynomial_example() {
        let u = Utility::polynomial_mixed(1.0, 0.5, 1.0, 0.5).unwrap();
        let b = slope_bounds(&u, 0.01, 1.0, 500).unwrap();
        assert!(b.lower > 0.0 && b.upper <= 5.0);
        assert!(slope_bounds(&Utility::Linear, 1.0, 0.0, 10).is_err());
        assert!(slope_bounds(&Utility::Linear, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn slope_bounds_flags_violation() {
        let u = Utility::polynomial_mixed(1.0, 0.5, 1.0, 0.5).unwrap();
        // the chord through 0 is finite, but the scan near 0 on a fine grid explodes
        let b = slope_bounds(&u, 0.0, 1.0, 2_000_001).unwrap();
        assert!(b.upper > 500.0);
        let steep = Utility::Exponential { lambda: 40.0 };
        let b = slope_bounds(&steep, 0.0, 1.0, 1001).unwrap();
        assert_eq!(b.violation, Some(SlopeViolation::UnboundedUpper));
        // saturated in floating point: numerically flat
        let flat = Utility::Exponential { lambda: -50.0 };
        let b = slope_bounds(&flat, 10.0, 20.0, 11).unwrap();
        assert_eq!(b.violation, Some(SlopeViolation::NonPositiveLower));
    }

    #[test]
    fn inverse_solves_reference_level() {
        assert_eq!(Utility::Linear.inverse(2.5).unwrap(), 2.5);
        let y = Utility::Entropic { lambda: 2.0 }.inverse(1.0).unwrap();
        assert!(y.abs() < 1e-15);
        let y = mix1().inverse(2.0).unwrap();
        assert_relative_eq!(mix1().value(y), 2.0, epsilon = 1e-12);
        assert!(Utility::Entropic { lambda: 1.0 }.inverse(-1.0).is_err());
    }

    #[test]
    fn truncation_knots_and_branches() {
        let t = truncate(&Utility::Linear, 0.0, 3.0, 0.5, Some(0.1)).unwrap();
        let Utility::Truncated { lower, upper, .. } = t else { panic!() };
        assert_eq!((lower, upper), (-12.0, 12.0));
        let e = Utility::Entropic { lambda: 1.0 };
        let t = truncate(&e, 1.0, 1.0, 0.5, Some(0.25)).unwrap();
        let Utility::Truncated { lower, upper, slope, .. } = t.clone() else { panic!() };
        assert_relative_eq!(t.value(upper + 1.0), e.value(upper) + slope);
        assert_eq!(t.value(upper), e.value(upper));
        assert_eq!(t.value(lower), e.value(lower));
        assert_relative_eq!(t.value(lower - 2.0), e.value(lower) - 0.5);
    }

    #[test]
    fn truncation_default_slope_is_floored_grid_minimum() {
        let e = Utility::Entropic { lambda: 1.0 };
        let t = truncate(&e, 1.0, 1.0, 0.5, None).unwrap();
        let Utility::Truncated { lower, slope, .. } = t else { panic!() };
        // e^x is convex, so the smallest chord sits at the left knot
        assert!(slope >= MIN_TRUNCATION_SLOPE);
        assert!(slope >= lower.exp() && slope < 1.01 * (lower + 4.0 / 2000.0).exp());
    }

    #[test]
    fn linearized_chord() {
        let sqrt = Utility::polynomial_mixed(1.0, 0.5, 1.0, 0.5).unwrap();
        let l = linearize_near_zero(&sqrt, 0.04, NearZeroScheme::Linear).unwrap();
        assert_relative_eq!(l.value(0.02), 0.1, epsilon = 1e-15);
        assert_relative_eq!(l.value(-0.02), -0.1, epsilon = 1e-15);
        assert_eq!(l.value(0.09), sqrt.value(0.09));

        let sq = Utility::polynomial_mixed(1.0, 2.0, 1.0, 2.0).unwrap();
        let l = linearize_near_zero(&sq, 0.1, NearZeroScheme::Linear).unwrap();
        let b = slope_bounds(&l, 0.0, 0.099, 100).unwrap();
        assert_relative_eq!(b.lower, 0.1, epsilon = 1e-12);
        assert_relative_eq!(b.upper, 0.1, epsilon = 1e-12);
        assert!(slope_bounds(&l, -1.0, 1.0, 1001).unwrap().is_valid());
    }

    #[test]
    fn shift_scheme() {
        let sqrt = Utility::polynomial_mixed(1.0, 0.5, 1.0, 0.5).unwrap();
        let s = linearize_near_zero(&sqrt, 0.01, NearZeroScheme::Shift).unwrap();
        assert_eq!(s.value(0.0), 0.0);
        assert_relative_eq!(s.value(0.5), 0.51f64.sqrt() - 0.1, epsilon = 1e-15);
        assert!(s.is_strictly_increasing_on(-2.0, 2.0, 4001));
        let err = linearize_near_zero(&Utility::Exponential { lambda: 1.0 }, 0.01, NearZeroScheme::Shift);
        assert!(matches!(err, Err(ValuationError::Unsupported(_))));
    }

    #[test]
    fn config_round_trip() {
        let u = linearize_near_zero(&mix1(), 1e-4, NearZeroScheme::Linear).unwrap();
        let text = toml::to_string(&u).unwrap();
        let back: Utility = toml::from_str(&text).unwrap();
        assert_eq!(u, back);
        let parsed: Utility = toml::from_str("family = \"piecewise_linear\"\nkappa = 0.5\n").unwrap();
        assert_eq!(parsed, Utility::PiecewiseLinear { kappa: 0.5 });
        assert!(toml::from_str::<Utility>("family = \"linear\"\nbogus = 1\n").is_err());
    }
}
