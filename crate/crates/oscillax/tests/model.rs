use oscillax::fixtures::{fix_pp, fix_zz, mu_a, mu_a_prime, mu_b, mu_b_prime, subcase_fixture, unif_pm1};
use oscillax::model::{
    argmin_laplace, cross_point, laplace, laplace_deriv, model_to_json, parse_model_json, tilt, validate_model,
    validate_model_with, Checks, Convention, Crossing, Drift, DriftCase, LatticeDist, ModelError,
};
use oscillax::regimes::Subcase;

fn law(atoms: &[(i64, i64, i64)]) -> LatticeDist {
    LatticeDist::from_fractions(atoms).unwrap()
}

#[test]
fn fix_zz_is_centered_on_both_sides() {
    let m = validate_model(mu_a(), unif_pm1(), mu_a_prime()).unwrap();
    assert_eq!(m.drift_case, DriftCase(Drift::Z, Drift::Z));
    assert_eq!(m.d, 2);
    assert_eq!(m.d_prime, -2);
    assert_eq!(m.convention, Convention::ThreeMedia);
    // means by direct summation
    let mean = |a: &[(i64, f64)]| a.iter().map(|&(v, p)| v as f64 * p).sum::<f64>();
    assert_eq!(mean(mu_a().atoms()), 0.0);
    assert_eq!(mean(mu_a_prime().atoms()), 0.0);
}

#[test]
fn one_sided_left_law_is_rejected() {
    let delta = law(&[(1, 1, 1)]);
    let err = validate_model(delta, unif_pm1(), mu_a_prime()).unwrap_err();
    assert!(matches!(err, ModelError::SupportOneSided(_)), "{err:?}");
}

#[test]
fn periodic_left_law_is_rejected() {
    let periodic = law(&[(-1, 1, 2), (2, 1, 2)]);
    let err = validate_model(periodic, unif_pm1(), mu_a_prime()).unwrap_err();
    assert!(matches!(err, ModelError::NotAperiodic(_)), "{err:?}");
}

#[test]
fn short_jumps_violate_o3_unless_waived() {
    let lazy = law(&[(-1, 1, 4), (0, 1, 2), (1, 1, 4)]);
    let err = validate_model(lazy.clone(), unif_pm1(), lazy.clone()).unwrap_err();
    assert_eq!(err, ModelError::O3Violated(-1));
    let m = validate_model_with(lazy.clone(), unif_pm1(), lazy, Checks { o3: false }).unwrap();
    assert!(m.o3_waived());
}

#[test]
fn origin_must_charge_both_sides() {
    let origin = law(&[(0, 1, 2), (1, 1, 2)]);
    let err = validate_model(mu_a(), origin, mu_a_prime()).unwrap_err();
    assert_eq!(err, ModelError::O4Violated);
}

#[test]
fn two_media_when_origin_matches_left() {
    let m = fix_pp();
    assert_eq!(m.convention, Convention::TwoMedia);
    assert_eq!(m.drift_case, DriftCase(Drift::P, Drift::P));
    assert!(m.origin.same_law(&m.left));
}

#[test]
fn laplace_at_zero_and_its_derivative() {
    for d in [mu_a(), mu_b(), mu_a_prime(), mu_b_prime()] {
        assert!((laplace(&d, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((laplace_deriv(&d, 0.0).unwrap() - d.mean()).abs() < 1e-15);
    }
}

#[test]
fn laplace_of_mu_b_at_its_minimiser() {
    let t = -(4f64.ln()) / 3.0;
    let want = 1.5 * 4f64.powf(-2.0 / 3.0) + 0.25;
    assert!((laplace(&mu_b(), t).unwrap() - want).abs() < 1e-14);
    assert!((want - 0.845275).abs() < 1e-6);
}

#[test]
fn laplace_overflow_guard() {
    assert!(matches!(laplace(&mu_b(), 400.0), Err(ModelError::Overflow(_))));
}

#[test]
fn argmin_examples() {
    assert_eq!(argmin_laplace(&mu_a()).unwrap(), (0.0, 1.0));
    let (l, r) = argmin_laplace(&mu_b()).unwrap();
    assert!((l + 4f64.ln() / 3.0).abs() < 1e-11);
    assert!((r - (1.5 * 4f64.powf(-2.0 / 3.0) + 0.25)).abs() < 1e-13);
    assert!(laplace_deriv(&mu_b(), l).unwrap().abs() <= 1e-12);
    let (lp, rp) = argmin_laplace(&mu_b_prime()).unwrap();
    assert!((lp + 3f64.ln() / 3.0).abs() < 1e-11);
    let closed = 3f64.powf(2.0 / 3.0) / 8.0 + 0.125 + 0.75 * 3f64.powf(-1.0 / 3.0);
    assert!((rp - closed).abs() < 1e-13);
    assert!((rp - 0.905029).abs() < 5e-6);
    assert!(matches!(argmin_laplace(&law(&[(1, 1, 1)])), Err(ModelError::SupportOneSided(_))));
}

#[test]
fn tilt_examples() {
    let d = mu_b();
    let same = tilt(&d, 0.0).unwrap();
    for (a, b) in same.atoms().iter().zip(d.atoms()) {
        assert_eq!(a.0, b.0);
        assert!((a.1 - b.1).abs() < 1e-15);
    }
    let centered = tilt(&d, -(4f64.ln()) / 3.0).unwrap();
    assert!(centered.mean().abs() < 1e-12);
    let (s, t) = (0.3, -0.7);
    let twice = tilt(&tilt(&d, s).unwrap(), t).unwrap();
    let once = tilt(&d, s + t).unwrap();
    for (a, b) in twice.atoms().iter().zip(once.atoms()) {
        assert_eq!(a.0, b.0);
        assert!((a.1 - b.1).abs() < 1e-14);
    }
}

#[test]
fn crossing_examples() {
    assert_eq!(cross_point(&mu_b(), &mu_b()).unwrap_err(), ModelError::IdenticalTransforms);
    assert_eq!(cross_point(&mu_b(), &mu_b_prime()).unwrap(), Crossing::NoCrossing);
    let f = subcase_fixture(Subcase::B4).unwrap();
    let (_, rho) = argmin_laplace(&f.model.left).unwrap();
    let (_, rho_p) = argmin_laplace(&f.model.right).unwrap();
    let Crossing::At { lambda_star, rho_star } = cross_point(&f.model.left, &f.model.right).unwrap() else {
        panic!("B4 fixture must cross");
    };
    let gap = laplace(&f.model.left, lambda_star).unwrap() - laplace(&f.model.right, lambda_star).unwrap();
    assert!(gap.abs() <= 1e-12);
    assert!(rho_star > rho.max(rho_p));
}

#[test]
fn degenerate_interval_when_minimisers_coincide() {
    let f = subcase_fixture(Subcase::A2).unwrap();
    assert_eq!(cross_point(&f.model.left, &f.model.right).unwrap_err(), ModelError::DegenerateInterval);
}

#[test]
fn json_round_trip_keeps_rationals() {
    for m in [fix_zz(), fix_pp()] {
        let text = model_to_json(&m).to_string();
        let back = parse_model_json(&text).unwrap();
        assert_eq!(back.left, m.left);
        assert_eq!(back.origin, m.origin);
        assert_eq!(back.right, m.right);
        assert_eq!(back.convention, m.convention);
    }
}

#[test]
fn json_accepts_decimal_and_fraction_strings() {
    let text = r#"{"left": [[-1, "1/2"], [0, 0.25], [2, "1/4"]],
                   "origin": [[-1, "1/2"], [1, "1/2"]],
                   "right": [[-2, "1/4"], [0, "1/4"], [1, "1/2"]]}"#;
    let m = parse_model_json(text).unwrap();
    assert_eq!(m.drift_case, DriftCase(Drift::Z, Drift::Z));
    let two = r#"{"left": [[-1, "1/4"], [0, "1/4"], [2, "1/2"]],
                  "right": [[-2, "1/8"], [0, "1/8"], [1, "3/4"]], "two_media": true}"#;
    assert_eq!(parse_model_json(two).unwrap().convention, Convention::TwoMedia);
    assert!(matches!(parse_model_json("{}"), Err(ModelError::Json(_))));
}

#[test]
fn malformed_laws_are_rejected() {
    assert!(matches!(LatticeDist::new(&[]), Err(ModelError::Empty)));
    assert!(matches!(LatticeDist::new(&[(0, 0.5), (0, 0.5)]), Err(ModelError::DuplicateAtom(0))));
    assert!(matches!(LatticeDist::new(&[(0, 0.5), (1, 0.4)]), Err(ModelError::NotNormalized(_))));
    assert!(matches!(LatticeDist::new(&[(0, 1.5), (1, -0.5)]), Err(ModelError::BadProbability(_))));
}

#[test]
fn mirror_swaps_and_negates() {
    let m = fix_zz();
    let r = m.mirror();
    assert_eq!(r.left, m.right.mirror());
    assert_eq!(r.right, m.left.mirror());
    assert_eq!(r.drift_case, m.drift_case.mirror());
}
