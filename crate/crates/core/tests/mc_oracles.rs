use approx::assert_relative_eq;
use martingality::mc::{
    estimate_deficit, estimate_deficit_localized, estimate_deficit_with, estimate_mean_direct, map_paths, simulate_path,
    stochastic_exponential, DeficitOptions, McError, SimConfig,
};
use martingality::model::modified_drift;
use martingality::{DiffusionSpec, ExponentSpec, Interval, LocalizationPlan};
use proptest::prelude::*;

fn line(drift: &str, sigma: &str) -> DiffusionSpec {
    DiffusionSpec::parse_1d(Interval::REAL_LINE, drift, sigma, 0.0).unwrap()
}

fn cfg(n: usize) -> SimConfig {
    SimConfig { n_paths: n, ..SimConfig::default() }
}

#[test]
fn deterministic_drift_has_trivial_exponential() {
    // With sigma = 0 the continuous martingale part vanishes, so Z stays 1.
    let spec = line("1", "0");
    let path = simulate_path(&spec, &SimConfig { n_paths: 1, ..SimConfig::default() }, 0).unwrap();
    let z = stochastic_exponential(&path, &spec, &ExponentSpec::parse_1d("1").unwrap()).unwrap();
    assert!(z.iter().all(|&v| v == 1.0));
}

#[test]
fn constant_beta_gives_geometric_brownian_motion() {
    let spec = line("0", "1");
    let path = simulate_path(&spec, &SimConfig { n_paths: 4, adaptive: false, ..SimConfig::default() }, 3).unwrap();
    let z = stochastic_exponential(&path, &spec, &ExponentSpec::parse_1d("1").unwrap()).unwrap();
    for ((t, x), z) in path.times.iter().zip(&path.states).zip(&z) {
        assert_relative_eq!(*z, (x[0] - 0.5 * t).exp(), max_relative = 1e-12);
    }
}

#[test]
fn brownian_exit_probability_with_bridge_correction() {
    // P(sup_{s<=1} |W_s| < 1) = (4/pi) Σ (-1)^k/(2k+1) exp(-(2k+1)^2 pi^2 / 8).
    let exact = 0.370_777_429_799_523_9;
    let plan = LocalizationPlan::new(vec![1.0, 2.0], vec![2.0, 2.0]).unwrap();
    let c = SimConfig { bridge_correction: true, ..cfg(20_000) };
    let curve = estimate_deficit_with(&line("0", "1"), &plan, 1.0, &c, DeficitOptions { allow_unconverged: true }).unwrap();
    let e = curve.entries[0];
    assert!((e.survival - exact).abs() <= 3.0 * e.std_error, "{} vs {exact}", e.survival);
}

#[test]
fn cubic_deficit_matches_pde_solution() {
    // Q(dY = Y^3 dt + dB explodes before 1) from a finite-difference solution
    // of u_t = u_yy/2 + y^3 u_y, extrapolated in the domain size.
    let pde = 0.3096;
    let spec = line("0", "1");
    let exp = ExponentSpec::parse_1d("x^3").unwrap();
    let plan = LocalizationPlan::geometric(1.0, 2.0, 7, 2.0).unwrap();
    let curve = estimate_deficit(&spec, &exp, &plan, 1.0, &cfg(20_000), DeficitOptions::default()).unwrap();
    let se = curve.last().std_error;
    assert!(curve.converged);
    assert!((curve.deficit() - pde).abs() <= 3.0 * se + 0.002, "{} ± {se}", curve.deficit());
}

#[test]
fn linear_exponent_has_no_deficit() {
    let spec = line("0", "1");
    let exp = ExponentSpec::parse_1d("x").unwrap();
    let modified = modified_drift(&spec, &exp).unwrap();
    let plan = LocalizationPlan::geometric(1.0, 2.0, 6, 2.0).unwrap();
    let curve = estimate_deficit_localized(&modified, &plan, 1.0, &cfg(10_000)).unwrap();
    assert!(curve.deficit() < 0.01);
    let direct = estimate_mean_direct(&spec, &exp, 1.0, &cfg(10_000)).unwrap();
    assert!(direct.within(1.0, 3.0), "{direct:?}");
}

#[test]
fn coarse_plan_is_reported() {
    let spec = line("0", "1");
    let exp = ExponentSpec::parse_1d("x^3").unwrap();
    let plan = LocalizationPlan::new(vec![0.5, 1.0], vec![2.0, 2.0]).unwrap();
    let r = estimate_deficit(&spec, &exp, &plan, 1.0, &cfg(2_000), DeficitOptions::default());
    let Err(McError::PlanTooCoarse { curve }) = r else { panic!("{r:?}") };
    assert!(!curve.converged);
}

#[test]
fn inverse_bessel_deficit() {
    // Z = X is the inverse Bessel(3) process: E[Z_1] = 2 Φ(1) - 1.
    let spec = DiffusionSpec::parse_1d(Interval::POSITIVE, "0", "x^2", 1.0).unwrap();
    let exp = ExponentSpec::parse_1d("1/x").unwrap();
    let plan = LocalizationPlan::new(vec![1.5, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0], vec![2.0; 7]).unwrap();
    let curve = estimate_deficit(&spec, &exp, &plan, 1.0, &cfg(20_000), DeficitOptions::default()).unwrap();
    let exact = 0.317_310_507_862_914_1;
    assert!((curve.deficit() - exact).abs() <= 3.0 * curve.last().std_error + 0.01, "{}", curve.deficit());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn survival_column_is_nondecreasing(seed in any::<u64>(), a in 0.0f64..2.0) {
        let spec = line("0", "1");
        let exp = ExponentSpec::parse_1d(&format!("{a}*x^3")).unwrap();
        let plan = LocalizationPlan::geometric(0.5, 2.0, 5, 2.0).unwrap();
        let c = SimConfig { n_paths: 200, seed, ..SimConfig::default() };
        let curve = estimate_deficit(&spec, &exp, &plan, 0.5, &c, DeficitOptions { allow_unconverged: true }).unwrap();
        prop_assert!(curve.entries.windows(2).all(|w| w[1].survival >= w[0].survival));
        prop_assert!(curve.entries.iter().all(|e| (0.0..=1.0).contains(&e.survival)));
    }

    #[test]
    fn paths_depend_only_on_seed_and_index(seed in any::<u64>(), index in 0u64..1000) {
        let spec = line("-x", "1");
        let c = SimConfig { seed, horizon: 0.2, ..SimConfig::default() };
        let a = simulate_path(&spec, &c, index).unwrap();
        let b = map_paths(3, |i| simulate_path(&spec, &c, index + i)).unwrap();
        prop_assert_eq!(&a, &b[0]);
        prop_assert_eq!(&simulate_path(&spec, &c, index + 2).unwrap(), &b[2]);
    }
}
