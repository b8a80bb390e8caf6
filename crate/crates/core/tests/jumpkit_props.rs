use approx::assert_relative_eq;
use martingality::jumpkit::{
    atom_r_increment, atom_r_increment_closed, check_jump_bound, compute_r, jump_stopped_means, simulate_jump_path, validate,
    Atom, DiscreteDist, GirsanovData, JumpError, JumpStop, JumpTriplet,
};
use martingality::mc::SimConfig;
use martingality::{DiffusionSpec, Interval, LocalizationPlan};
use proptest::prelude::*;

fn bm() -> DiffusionSpec {
    DiffusionSpec::parse_1d(Interval::REAL_LINE, "0", "1", 0.0).unwrap()
}

fn cfg(n: usize) -> SimConfig {
    SimConfig { n_paths: n, ..SimConfig::default() }
}

fn symmetric(size: f64) -> DiscreteDist {
    DiscreteDist::new(vec![-size, size], vec![0.5, 0.5]).unwrap()
}

#[test]
fn atom_with_full_weighted_mass_is_rejected() {
    // a = 0.5 and U = 2 give Uhat = 1, so the no-jump branch has ΔN = -1.
    let atom = Atom { time: 0.5, mass: 0.5, dist: symmetric(1.0) };
    let trip = JumpTriplet::new(bm(), 0.0, None, vec![atom]).unwrap();
    let r = validate(&trip, &GirsanovData::parse("0", "2").unwrap(), 1.0);
    assert!(matches!(r, Err(JumpError::Validation(_))), "{r:?}");
}

#[test]
fn poisson_stopped_means_are_one() {
    let trip = JumpTriplet::new(bm(), 1.0, Some(symmetric(0.5)), vec![]).unwrap();
    let gd = GirsanovData::parse("0", "4").unwrap();
    let plan = LocalizationPlan::geometric(4.0, 2.0, 3, 2.0).unwrap();
    for e in jump_stopped_means(&trip, &gd, 1.0, &plan, &cfg(10_000)).unwrap() {
        assert!(e.within(1.0, 3.0), "{e:?}");
    }
}

#[test]
fn atom_increment_matches_hand_value() {
    let atom = Atom { time: 0.5, mass: 0.5, dist: symmetric(1.0) };
    let gd = GirsanovData::parse("0.5", "1.5").unwrap();
    let expected = 2.0 * (1.0 - 0.5 * 1.5f64.sqrt() - 0.125f64.sqrt());
    assert_relative_eq!(atom_r_increment(&atom, &gd), expected, max_relative = 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn validated_triplets_keep_jumps_of_n_above_minus_one(
        rate in 0.0f64..3.0,
        size in 0.1f64..2.0,
        u in 0.05f64..5.0,
        mass in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let atom_u = (0.9 / mass).min(u);
        let atom = Atom { time: 0.5, mass, dist: symmetric(size) };
        let trip = JumpTriplet::new(bm(), rate, Some(symmetric(size)), vec![atom]).unwrap();
        let gd = GirsanovData::parse("0", &format!("{atom_u}")).unwrap();
        prop_assume!(validate(&trip, &gd, 1.0).is_ok());
        let report = check_jump_bound(&trip, &gd, 1.0, &SimConfig { seed, ..cfg(64) }).unwrap();
        prop_assert!(report.all_ok());
        prop_assert!(report.min_delta_n > -1.0);
    }

    #[test]
    fn atom_increment_closed_form_agrees(mass in 0.01f64..0.99, p in 0.01f64..0.99, u1 in 0.0f64..3.0, u2 in 0.0f64..3.0) {
        let atom = Atom { time: 0.25, mass, dist: DiscreteDist::new(vec![-1.0, 1.0], vec![p, 1.0 - p]).unwrap() };
        // U(x) = u1 on x < 0 and u2 on x > 0.
        let u = format!("{u1} + ({u2} - {u1}) * (x + 1) / 2");
        let gd = GirsanovData::parse("0", &u).unwrap();
        prop_assume!(mass * (p * u1 + (1.0 - p) * u2) <= 1.0);
        let a = atom_r_increment(&atom, &gd);
        let b = atom_r_increment_closed(&atom, &gd);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}", a, b);
        prop_assert!(a >= -1e-15);
    }

    #[test]
    fn hellinger_process_is_nondecreasing_and_reproducible(seed in any::<u64>(), u in 0.1f64..4.0) {
        let atom = Atom { time: 0.5, mass: 0.3, dist: symmetric(0.7) };
        let trip = JumpTriplet::new(bm(), 1.0, Some(symmetric(0.5)), vec![atom]).unwrap();
        let gd = GirsanovData::parse("x", &format!("{}", u.min(3.0))).unwrap();
        let c = SimConfig { seed, adaptive: false, ..cfg(1) };
        let rec = simulate_jump_path(&trip, &gd, &c, 0, JumpStop::NONE).unwrap();
        let r: Vec<f64> = rec.points.iter().map(|p| p.r).collect();
        prop_assert!(r.windows(2).all(|w| w[1] >= w[0]));
        let ts: Vec<f64> = rec.points.iter().map(|p| p.t).collect();
        let xs: Vec<f64> = rec.points.iter().map(|p| p.x).collect();
        prop_assert_eq!(compute_r(&trip, &gd, &ts, &xs).unwrap().r, r);
    }
}
