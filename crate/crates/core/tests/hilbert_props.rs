use martingality::hilbert::{
    estimate_hilbert_expectation, hilbert_novikov, mode_statistics, simulate_q_brownian, CovarianceSpec, FunctionalSpec,
};
use martingality::mc::SimConfig;
use martingality::{Classification, LocalizationPlan};
use proptest::prelude::*;

fn cfg(n: usize) -> SimConfig {
    SimConfig { n_paths: n, ..SimConfig::default() }
}

fn plan() -> LocalizationPlan {
    LocalizationPlan::geometric(4.0, 2.0, 4, 2.0).unwrap()
}

#[test]
fn running_sup_is_a_true_martingale() {
    let cov = CovarianceSpec::geometric(16, 0.5).unwrap();
    let phi = FunctionalSpec::running_sup(16, 0).with_claims(Some(1.0), Some(1.0));
    let r = estimate_hilbert_expectation(&phi, &cov, 1.0, &plan(), &cfg(4_000)).unwrap();
    assert!(r.direct.within(1.0, 3.0), "{:?}", r.direct);
    assert_eq!(r.classification, Classification::TrueMartingale);
    assert_eq!(r.conditions.pass_lipschitz, Some(true));
    assert_eq!(r.conditions.pass_growth, Some(true));
}

#[test]
fn unordered_eigenvalues_are_rejected() {
    assert!(CovarianceSpec::new(vec![0.5, 1.0]).is_err());
    assert!(CovarianceSpec::new(vec![1.0, 0.0]).is_err());
    assert!(CovarianceSpec::new(vec![]).is_err());
}

#[test]
fn mode_variances_match_eigenvalues() {
    let cov = CovarianceSpec::new(vec![2.0, 1.0, 0.25]).unwrap();
    let stats = mode_statistics(&cov, 1.0, &cfg(5_000)).unwrap();
    assert!(stats.all_pass(), "{stats:?}");
}

#[test]
fn novikov_is_finite_for_running_sup() {
    let cov = CovarianceSpec::new(vec![1.0]).unwrap();
    let e = hilbert_novikov(&FunctionalSpec::running_sup(1, 0), &cov, 0.5, &cfg(2_000)).unwrap();
    assert!(e.mean.is_finite() && e.mean >= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn extra_modes_leave_existing_modes_unchanged(seed in any::<u64>(), extra in 1usize..4, index in 0u64..100) {
        let small = CovarianceSpec::new(vec![1.0, 0.5]).unwrap();
        let eig: Vec<f64> = (0..2 + extra).map(|k| 0.5f64.powi(k as i32)).collect();
        let large = CovarianceSpec::new(eig).unwrap();
        let c = SimConfig { seed, horizon: 0.5, ..cfg(100) };
        let a = simulate_q_brownian(&small, &c, index).unwrap();
        let b = simulate_q_brownian(&large, &c, index).unwrap();
        prop_assert_eq!(&a.times, &b.times);
        for (sa, sb) in a.states.iter().zip(&b.states) {
            prop_assert_eq!(&sa[..], &sb[..2]);
        }
    }

    #[test]
    fn expectation_ignores_unused_modes(seed in any::<u64>()) {
        let c = SimConfig { seed, ..cfg(300) };
        let one = CovarianceSpec::new(vec![1.0]).unwrap();
        let three = CovarianceSpec::new(vec![1.0, 0.5, 0.25]).unwrap();
        let a = estimate_hilbert_expectation(&FunctionalSpec::running_sup(1, 0), &one, 1.0, &plan(), &c).unwrap();
        let b = estimate_hilbert_expectation(&FunctionalSpec::running_sup(3, 0), &three, 1.0, &plan(), &c).unwrap();
        // Z only sees the first mode; the exit times use the full norm and may move.
        prop_assert_eq!(a.direct.mean, b.direct.mean);
    }
}
