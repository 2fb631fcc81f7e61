use proptest::prelude::*;
use riskrl::valuation::{
    linearize_near_zero, subjective_probability, FiniteDistribution, NearZeroScheme, Shortfall, Utility,
};

const TOL: f64 = 1e-11;

fn dist() -> impl Strategy<Value = FiniteDistribution> {
    prop::collection::vec((-20.0..20.0f64, 0.01..1.0f64), 1..7).prop_map(|pairs| {
        let z: f64 = pairs.iter().map(|p| p.1).sum();
        FiniteDistribution::new(pairs.into_iter().map(|(v, w)| (v, w / z))).unwrap()
    })
}

fn utility() -> impl Strategy<Value = (Utility, f64)> {
    prop_oneof![
        Just((Utility::Linear, 0.0)),
        (0.05..1.0f64).prop_map(|l| (Utility::Exponential { lambda: -l }, 0.0)),
        (0.05..0.5f64).prop_map(|l| (Utility::Exponential { lambda: l }, 0.0)),
        (-0.9..0.9f64).prop_map(|k| (Utility::PiecewiseLinear { kappa: k }, 0.0)),
        (0.05..1.0f64).prop_map(|l| (Utility::Entropic { lambda: -l }, -1.0)),
        (0.2..2.0f64, 0.3..2.0f64, 0.2..2.0f64, 0.3..2.0f64).prop_map(|(a, b, c, d)| {
            let inner = Utility::PolynomialMixed { k_plus: a, l_plus: b, k_minus: c, l_minus: d };
            (linearize_near_zero(&inner, 1e-4, NearZeroScheme::Linear).unwrap(), 0.0)
        }),
    ]
}

fn centralized(u: &Utility, x0: f64, x: &FiniteDistribution) -> f64 {
    Shortfall::new(u.clone(), x0).unwrap().centralized(x, TOL).unwrap()
}

proptest! {
    #[test]
    fn constants_map_to_themselves((u, x0) in utility(), c in -50.0..50.0f64) {
        let v = centralized(&u, x0, &FiniteDistribution::point(c));
        prop_assert!((v - c).abs() < 1e-9, "{v} vs {c}");
    }

    #[test]
    fn dominance_is_preserved((u, x0) in utility(), x in dist(), bumps in prop::collection::vec(0.0..3.0f64, 6)) {
        let y = FiniteDistribution::from_parts(
            x.values().iter().zip(&bumps).map(|(v, b)| v + b).collect(),
            x.probs().to_vec(),
        ).unwrap();
        prop_assert!(centralized(&u, x0, &x) <= centralized(&u, x0, &y) + 1e-9);
    }

    #[test]
    fn cash_additive((u, x0) in utility(), x in dist(), c in -10.0..10.0f64) {
        let a = centralized(&u, x0, &x);
        let b = centralized(&u, x0, &x.shift(c));
        prop_assert!((b - a - c).abs() < 1e-9);
    }

    #[test]
    fn value_between_worst_and_best((u, x0) in utility(), x in dist()) {
        let v = centralized(&u, x0, &x);
        prop_assert!(v >= x.min() - 1e-9 && v <= x.max() + 1e-9);
    }

    #[test]
    fn concave_utility_is_risk_averse(l in 0.05..1.5f64, x in dist()) {
        let ra = centralized(&Utility::Exponential { lambda: -l }, 0.0, &x);
        let rs = centralized(&Utility::Exponential { lambda: l.min(0.5) }, 0.0, &x);
        prop_assert!(ra <= x.mean() + 1e-9);
        prop_assert!(rs >= x.mean() - 1e-9);
    }

    #[test]
    fn subjective_probability_is_a_monotone_distortion((u, x0) in utility(), p in 0.0..1.0f64, dp in 0.0..0.2f64) {
        let sf = Shortfall::new(u, x0).unwrap();
        let w = |p: f64| subjective_probability(2.0, -1.0, p, &sf, 1e-12).unwrap();
        let (a, b) = (w(p), w((p + dp).min(1.0)));
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&a));
        prop_assert!(a <= b + 1e-9);
    }
}

#[test]
fn subjective_probability_endpoints() {
    let sf = Shortfall::new(Utility::Exponential { lambda: -1.0 }, 0.0).unwrap();
    assert!(subjective_probability(1.0, -1.0, 0.0, &sf, 1e-13).unwrap().abs() < 1e-10);
    assert!((subjective_probability(1.0, -1.0, 1.0, &sf, 1e-13).unwrap() - 1.0).abs() < 1e-10);
}

/// `(1/λ) ln E e^{λX}` is the cumulant series `κ1 + λκ2/2 + λ²κ3/6 + λ³κ4/24 + …`.
#[test]
fn entropic_map_follows_the_cumulant_series() {
    let cv = |x: &FiniteDistribution, lambda: f64| {
        let x0 = lambda.signum();
        Shortfall::new(Utility::Entropic { lambda }, x0).unwrap().centralized(x, 1e-15).unwrap()
    };
    // skewed two-point: κ3 = (a−b)³ p(1−p)(1−2p)
    let x = FiniteDistribution::two_point(2.0, -1.0, 0.3).unwrap();
    let k3 = 27.0 * 0.21 * 0.4;
    for lambda in [0.02, -0.02, 0.01] {
        let err = cv(&x, lambda) - (x.mean() + lambda / 2.0 * x.variance());
        assert!((err / (lambda * lambda) - k3 / 6.0).abs() < 0.05, "λ = {lambda}: {}", err / (lambda * lambda));
    }
    // symmetric ±1: κ3 = 0, κ4 = −2
    let x = FiniteDistribution::two_point(1.0, -1.0, 0.5).unwrap();
    for lambda in [0.05, 0.025] {
        let err = cv(&x, lambda) - (x.mean() + lambda / 2.0 * x.variance());
        assert!((err / lambda.powi(3) + 1.0 / 12.0).abs() < 0.01, "λ = {lambda}: {}", err / lambda.powi(3));
    }
}
