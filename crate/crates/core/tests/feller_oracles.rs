use approx::assert_relative_eq;
use martingality::feller::{classify_explosion, feller_v, martingale_verdict, martingale_verdict_with, Endpoint, Explosion, FellerOptions, VStatus, VerdictOptions};
use martingality::{Classification, DiffusionSpec, ExponentSpec, Interval};
use proptest::prelude::*;

fn line(drift: &str, sigma: &str) -> DiffusionSpec {
    DiffusionSpec::parse_1d(Interval::REAL_LINE, drift, sigma, 0.0).unwrap()
}

#[test]
fn cubic_v_off_center_matches_high_precision_quadrature() {
    // v(+inf) = ∫_xi^inf ∫_xi^y 2 exp((z^4 - y^4)/2) dz dy at xi = 1.5, from a
    // 30-digit nested quadrature.
    let v = feller_v(&line("x^3", "1"), Endpoint::Right, 1.5, &FellerOptions::default()).unwrap();
    let VStatus::Finite { value } = v else { panic!("{v:?}") };
    assert_relative_eq!(value, 0.205_808_636_530_602, max_relative = 1e-6);
}

#[test]
fn classify_explosion_examples() {
    assert_eq!(classify_explosion(&line("0", "1")).unwrap().conclusion, Explosion::NonExplosive);
    assert_eq!(classify_explosion(&line("x", "1")).unwrap().conclusion, Explosion::NonExplosive);
    assert_eq!(classify_explosion(&line("x^3", "1")).unwrap().conclusion, Explosion::Explosive);
}

#[test]
fn verdict_examples() {
    let bm = line("0", "1");
    let v = |beta: &str| martingale_verdict(&bm, &ExponentSpec::parse_1d(beta).unwrap()).unwrap().classification;
    assert_eq!(v("x"), Classification::TrueMartingale);
    assert_eq!(v("x^3"), Classification::StrictLocal);
    assert_eq!(v("0"), Classification::TrueMartingale);
}

#[test]
fn inverse_bessel_is_strict() {
    let spec = DiffusionSpec::parse_1d(Interval::POSITIVE, "0", "x^2", 1.0).unwrap();
    let v = martingale_verdict(&spec, &ExponentSpec::parse_1d("1/x").unwrap()).unwrap();
    assert_eq!(v.classification, Classification::StrictLocal);
}

#[test]
fn explosive_original_is_inconclusive() {
    let v = martingale_verdict(&line("x^3", "1"), &ExponentSpec::parse_1d("x").unwrap()).unwrap();
    assert_eq!(v.classification, Classification::Inconclusive);
    assert!(v.notes.iter().any(|n| n.contains("explodes")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn verdict_ignores_reference_point_and_time_scale(
        power in prop_oneof![Just(1u32), Just(3u32)],
        xi in -2.0f64..2.0,
        lambda in 0.25f64..4.0,
    ) {
        let spec = line("0", "1");
        let exp = ExponentSpec::parse_1d(&format!("x^{power}")).unwrap();
        let base = martingale_verdict(&spec, &exp).unwrap().classification;
        let shifted = martingale_verdict_with(&spec, &exp, &VerdictOptions { xi: Some(xi), ..Default::default() }).unwrap();
        prop_assert_eq!(shifted.classification, base);
        prop_assert_eq!(martingale_verdict(&spec.scaled(lambda), &exp).unwrap().classification, base);
    }

    #[test]
    fn partial_v_is_monotone_toward_the_endpoint(a in 0.2f64..2.0) {
        let spec = line(&format!("{a}*x^3"), "1");
        let out = martingality::feller::feller_v_outcome(&spec, Endpoint::Right, 0.0, &FellerOptions::default()).unwrap();
        prop_assert!(out.partial.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(out.status.is_finite());
    }
}
