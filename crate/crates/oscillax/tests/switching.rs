use num_rational::BigRational;
use num_traits::{One, Zero};
use oscillax::evolve::Window;
use oscillax::fixtures::{fix_pn, fix_pp, fix_pz, fix_zp, fix_zz};
use oscillax::ladder::{ladder_data, ladder_heights, LadderVariant};
use oscillax::model::{argmin_laplace, laplace, laplace_exact, tilt_exact, OscillatingModel};
use oscillax::numeric::{ratio, rpow};
use oscillax::switching::{
    build_q, convolution_powers, default_aggregate, doob_transform, left_perron, limit_operator_e, limit_operator_e_l,
    power_iterate, renewal_sequence, tilted_kernels, KernelSeq, SwitchingError, WeightSpec,
};
use oscillax::verify::convergence_suite;

#[test]
fn every_row_accounts_for_its_mass_exactly() {
    let m = fix_zz();
    let w = Window::new(-10, 10, m.max_jump()).unwrap();
    let rows: Vec<i64> = w.sites().collect();
    let n = 15;
    let k = build_q::<BigRational>(&m, n, w, &rows).unwrap();
    for (r, &x) in rows.iter().enumerate() {
        let mut absorbed = BigRational::zero();
        for t in 1..=n {
            for &y in k.arrivals() {
                absorbed += k.q.get(t, x, y);
            }
            let total = absorbed.clone() + k.survival[t][r].clone() + k.leak[t][r].clone();
            assert_eq!(total, BigRational::one(), "x={x} n={t}");
        }
    }
}

#[test]
fn origin_row_follows_the_origin_law() {
    let m = fix_zz();
    let w = Window::symmetric(16, &m).unwrap();
    let k = build_q::<BigRational>(&m, 6, w, &[0]).unwrap();
    let total: BigRational = (1..=6).map(|n| k.q.get(n, 0, 1)).sum();
    assert_eq!(total, ratio(1, 2));
    let q = default_aggregate(&m).unwrap();
    assert!((q.get(0, 1) - 0.5).abs() < 1e-15);
    assert!((q.get(0, -1) - 0.5).abs() < 1e-15);
}

#[test]
fn aggregate_row_matches_ladder_heights() {
    // Q(-1, y) = mu_{*+}(y + 1) for the centered left law
    let m = fix_zz();
    let q = default_aggregate(&m).unwrap();
    let h = ladder_heights(&m.left, LadderVariant::StrictAsc).unwrap();
    for y in 0..=1 {
        assert!((q.get(-1, y) - h.prob(y + 1)).abs() < 1e-9, "y={y}");
    }
}

#[test]
fn first_renewal_operators_expand_by_hand() {
    let m = fix_zz();
    let w = Window::symmetric(16, &m).unwrap();
    let a = m.arrival_set();
    let k = build_q::<BigRational>(&m, 4, w, &a).unwrap();
    let t = renewal_sequence(&k, 4);
    for &x in &a {
        for &y in &a {
            assert_eq!(t.get(0, x, y), if x == y { BigRational::one() } else { BigRational::zero() });
            assert_eq!(t.get(1, x, y), k.q.get(1, x, y));
            let two: BigRational =
                k.q.get(2, x, y) + a.iter().map(|&z| k.q.get(1, x, z) * k.q.get(1, z, y)).sum::<BigRational>();
            assert_eq!(t.get(2, x, y), two);
        }
    }
}

#[test]
fn renewal_recursion_equals_the_sum_over_switch_counts() {
    for m in [fix_zz(), fix_pp()] {
        let n_max = 12;
        let w = Window::symmetric(32, &m).unwrap();
        let a = m.arrival_set();
        let k = build_q::<BigRational>(&m, n_max, w, &a).unwrap();
        let t = renewal_sequence(&k, n_max);
        let powers = convolution_powers(&k, n_max);
        for n in 1..=n_max {
            for &x in &a {
                for &y in &a {
                    let direct: BigRational = powers[..n].iter().map(|p| p.get(n, x, y)).sum();
                    assert_eq!(t.get(n, x, y), direct, "n={n} x={x} y={y}");
                }
            }
        }
    }
}

#[test]
fn positive_recurrent_fixture_has_markovian_q() {
    let m = fix_pn();
    let q = default_aggregate(&m).unwrap();
    let s = power_iterate(&q, Window { lo: -64, hi: 64 }, WeightSpec::default()).unwrap();
    assert!(s.markovian);
    assert!((s.rho_psi - 1.0).abs() < 1e-9);
    let nu = s.nu.as_ref().unwrap();
    let total: f64 = nu.iter().map(|a| a.1).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for &(y, p) in nu {
        assert!(p >= 0.0);
        if p > 0.0 {
            assert!((-1..=1).contains(&y), "nu charges {y}");
        }
    }
    assert!(s.min_h() > 0.0);
}

#[test]
fn transient_right_side_gives_spectral_radius_below_one() {
    let m = fix_zp();
    let q = default_aggregate(&m).unwrap();
    let s = power_iterate(&q, Window { lo: -64, hi: 64 }, WeightSpec::default()).unwrap();
    assert!(!s.markovian);
    assert!(s.rho_psi < 1.0 - 1e-3);
    assert!(s.min_h() > 0.0);
    assert!(s.residual <= 1e-8);
}

#[test]
fn spectral_radius_does_not_depend_on_the_weight() {
    let m = fix_zp();
    let q = default_aggregate(&m).unwrap();
    let w = Window { lo: -64, hi: 64 };
    let a = power_iterate(&q, w, WeightSpec::Polynomial { delta: 0.5 }).unwrap();
    let b = power_iterate(&q, w, WeightSpec::Polynomial { delta: 0.25 }).unwrap();
    let c = power_iterate(&q, w, WeightSpec::exponential_for(0.0, 0.2)).unwrap();
    assert!((a.rho_psi - b.rho_psi).abs() <= 1e-8);
    assert!((a.rho_psi - c.rho_psi).abs() <= 1e-8);
}

#[test]
fn weights_dominate_linear_growth() {
    for w in [WeightSpec::default(), WeightSpec::exponential_for(-0.4, 0.3)] {
        let ratio_at = |x: i64| w.eval(x) / (1.0 + x.abs() as f64);
        for x in -64..=64 {
            assert!(w.eval(x) >= 1.0);
        }
        assert!(ratio_at(64) > ratio_at(8) && ratio_at(-64) > ratio_at(-8));
    }
}

#[test]
fn rank_one_kernel_has_its_own_left_vector() {
    let nu = [0.2, 0.5, 0.3];
    let q: Vec<f64> = (0..3).flat_map(|_| nu).collect();
    let got = left_perron(&q, 3);
    for (a, b) in got.iter().zip(nu) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn float_kernel(m: &OscillatingModel, n: usize) -> KernelSeq<f64> {
    let w = Window::symmetric(64, m).unwrap();
    build_q::<f64>(m, n, w, &m.arrival_set()).unwrap().q
}

#[test]
fn doob_transform_with_constant_h_is_the_identity() {
    let q = float_kernel(&fix_zz(), 10);
    let t = doob_transform(&q, |_| 1.0, 1.0);
    assert_eq!(t.data, q.data);
}

#[test]
fn doob_transform_commutes_with_convolution() {
    let q = float_kernel(&fix_pp(), 10);
    let h = |x: i64| 1.0 + (x * x) as f64 / 3.0;
    let rho = 0.8;
    let hq = doob_transform(&q, h, rho);
    let mut plain = q.clone();
    let mut tilted = hq.clone();
    for l in 2..=3 {
        plain = plain.convolve(&q);
        tilted = tilted.convolve(&hq);
        for n in 0..=10 {
            for &x in &q.rows {
                for &y in &q.cols {
                    let want = plain.get(n, x, y) * h(y) / (rho.powi(l) * h(x));
                    let got = tilted.get(n, x, y);
                    assert!((got - want).abs() <= 1e-15 * want.abs().max(1e-300), "l={l} n={n}");
                }
            }
        }
    }
}

#[test]
fn doob_transform_becomes_markovian_with_horizon() {
    let m = fix_zp();
    let q = default_aggregate(&m).unwrap();
    let s = power_iterate(&q, Window { lo: -64, hi: 64 }, WeightSpec::default()).unwrap();
    let w = Window::symmetric(2048, &m).unwrap();
    let k = build_q::<f64>(&m, 1024, w, &m.arrival_set()).unwrap();
    let hq = doob_transform(&k.q, |x| s.h_at(x), s.rho_psi);
    let defect = |n: usize| -> f64 {
        hq.rows
            .iter()
            .map(|&x| {
                let mass: f64 =
                    (1..=n).flat_map(|t| hq.cols.iter().map(move |&y| (t, y))).map(|(t, y)| hq.get(t, x, y)).sum();
                (1.0 - mass).abs()
            })
            .fold(0.0, f64::max)
    };
    let (a, b, c) = (defect(64), defect(256), defect(1024));
    assert!(a > b && b > c, "{a} {b} {c}");
    assert!(c < 0.05);
}

#[test]
fn change_of_measure_is_exact_for_rational_tilts() {
    let m = fix_pp();
    let u = ratio(2, 1);
    let left = tilt_exact(&m.left, &u).unwrap();
    let right = tilt_exact(&m.right, &u).unwrap();
    let tilted = OscillatingModel::two_media(left, right).unwrap();
    let (l, lp) = (laplace_exact(&m.left, &u).unwrap(), laplace_exact(&m.right, &u).unwrap());
    let w = Window::symmetric(32, &m).unwrap();
    let rows: Vec<i64> = (-6..=6).collect();
    let a = build_q::<BigRational>(&m, 10, w, &rows).unwrap();
    let b = build_q::<BigRational>(&tilted, 10, w, &rows).unwrap();
    for n in 1..=10 {
        for &x in &rows {
            let side = if x <= 0 { &l } else { &lp };
            for &y in a.arrivals() {
                let want = rpow(side, n as i64) * rpow(&u, x - y) * b.q.get(n, x, y);
                assert_eq!(a.q.get(n, x, y), want, "n={n} x={x} y={y}");
            }
        }
    }
}

#[test]
fn tilted_kernels_damp_the_smaller_transform() {
    let m = fix_pp();
    let (lp, rho_p) = argmin_laplace(&m.right).unwrap();
    let l_at = laplace(&m.left, lp).unwrap();
    let r = l_at / rho_p;
    assert!((l_at - 0.850937).abs() < 1e-6);
    assert!(r < 1.0);
    let w = Window::symmetric(64, &m).unwrap();
    let rows = m.arrival_set();
    let k = tilted_kernels(&m, lp, 200, w, &rows).unwrap();
    let tilted = OscillatingModel::two_media(
        oscillax::model::tilt(&m.left, lp).unwrap(),
        oscillax::model::tilt(&m.right, lp).unwrap(),
    )
    .unwrap();
    let plain = build_q::<f64>(&tilted, 200, w, &rows).unwrap();
    for n in 1..=50 {
        for &x in &rows {
            for &y in &rows {
                let f = if x <= 0 { r.powi(n as i32) } else { 1.0 };
                let want = plain.q.get(n, x, y) * f;
                assert!((k.q.get(n, x, y) - want).abs() <= 1e-14 * want.abs().max(1e-300));
            }
        }
    }
    let sums: Vec<f64> = rows
        .iter()
        .map(|&x| (1..=200).flat_map(|n| rows.iter().map(move |&y| (n, y))).map(|(n, y)| k.q.get(n, x, y)).sum())
        .collect();
    for (&x, s) in rows.iter().zip(&sums) {
        if x <= 0 {
            assert!(*s < 1.0 - 1e-3, "row {x} sums to {s}");
        }
    }
}

#[test]
fn tilted_kernels_need_two_media() {
    let m = fix_zz();
    let w = Window::symmetric(16, &m).unwrap();
    assert!(matches!(tilted_kernels(&m, 0.1, 4, w, &[-1]), Err(SwitchingError::ConventionMismatch)));
}

#[test]
fn limit_operator_vanishes_on_the_drifting_side() {
    let m = fix_pz();
    let rows: Vec<i64> = (-8..=8).collect();
    let e = limit_operator_e(&m, &rows).unwrap();
    for &x in rows.iter().filter(|&&x| x <= -1) {
        for &y in &e.cols {
            assert_eq!(e.get(0, x, y), 0.0);
        }
    }
    assert!(rows.iter().any(|&x| x >= 1 && e.cols.iter().any(|&y| e.get(0, x, y) > 0.0)));
}

#[test]
fn first_limit_operator_is_e() {
    let m = fix_zz();
    let a = m.arrival_set();
    let e = limit_operator_e(&m, &a).unwrap();
    let q = default_aggregate(&m).unwrap();
    let e1 = limit_operator_e_l(&q, &e.data[0], 1);
    assert_eq!(e1, e.data[0]);
}

#[test]
fn scaled_kernel_approaches_the_limit_operator() {
    let m = fix_zz();
    let n = 4096usize;
    let w = Window::symmetric(2 * n as i64 + 8, &m).unwrap();
    let k = build_q::<f64>(&m, n, w, &[-1]).unwrap();
    let scaled = (n as f64).powf(1.5) * k.q.get(n, -1, 0);
    // independent evaluation of the closed form
    let up = ladder_data(&m.left, LadderVariant::StrictAsc, 8).unwrap().renewal;
    let down = ladder_data(&m.left, LadderVariant::WeakDesc, 8).unwrap().renewal;
    let sum: f64 = (1..=m.left.max_jump()).map(|w| down.v(w) * m.left.prob(w)).sum();
    let closed = up.v(1) * sum / (m.left.sigma() * (2.0 * std::f64::consts::PI).sqrt());
    let e = limit_operator_e(&m, &[-1]).unwrap().get(0, -1, 0);
    assert!((e / closed - 1.0).abs() < 1e-9);
    assert!((scaled / e - 1.0).abs() < 0.05, "{scaled} vs {e}");
}

#[test]
fn per_switch_count_limits() {
    let m = fix_zz();
    let n = 4096usize;
    let a = m.arrival_set();
    let w = Window::symmetric(2 * n as i64 + 8, &m).unwrap();
    let k = build_q::<f64>(&m, n, w, &a).unwrap();
    let powers = convolution_powers(&k, 3);
    let e = limit_operator_e(&m, &a).unwrap();
    let q = default_aggregate(&m).unwrap();
    let ma = a.len();
    for (i, p) in powers.iter().enumerate() {
        let l = i + 1;
        let el = limit_operator_e_l(&q, &e.data[0], l);
        for (r, &x) in a.iter().enumerate() {
            for (c, &y) in a.iter().enumerate() {
                let target = el[r * ma + c];
                if target < 1e-3 {
                    continue;
                }
                let s = |t: usize| (t as f64).powf(1.5) * p.get(t, x, y);
                let (s1, s2) = (s(n / 2), s(n));
                assert!((s2 / s1 - 1.0).abs() <= 0.02, "l={l} ({x},{y}): {s1} -> {s2}");
                assert!((s2 / target - 1.0).abs() <= 0.05, "l={l} ({x},{y}): {s2} vs {target}");
            }
        }
    }
}

#[test]
fn switch_count_bound_grows_at_most_quadratically() {
    let m = fix_zz();
    let w = Window::symmetric(512, &m).unwrap();
    let r = convergence_suite(&m, 256, w).unwrap();
    assert_eq!(r.l2_bound.len(), 5);
    for p in r.l2_bound.windows(2) {
        assert!(p[1].is_finite() && p[1] <= 2.0 * p[0], "{:?}", r.l2_bound);
    }
}

#[test]
fn return_time_tail_constant() {
    for m in [fix_zz(), fix_pz()] {
        let w = Window::symmetric(512, &m).unwrap();
        let r = convergence_suite(&m, 4096, w).unwrap();
        let last = r.tail_final();
        assert!((last - 1.0).abs() <= 0.05, "{}: {:?}", m.drift_case, r.tail_series);
    }
}
