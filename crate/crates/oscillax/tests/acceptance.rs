//! Acceptance run: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use oscillax::evolve::{
    first_passage_kernel, marginal_sequence, marginal_sequence_scaled, HalfLine, LogSequence, Side, Window,
};
use oscillax::fixtures::{fix_pn, fix_pp, fix_pz, fix_zp, fix_zz, mu_a, subcase_fixtures};
use oscillax::ladder::{c_direct, fluctuation_constants, ladder_data, LadderVariant};
use oscillax::model::argmin_laplace;
use oscillax::regimes::{predicted_constant_cy, spectral_for};
use oscillax::switching::{default_aggregate, power_iterate, WeightSpec};
use oscillax::verify::{
    asymptotics_suite, convergence_suite, fit_rate_exponent_window, identity_suite_exact, identity_suite_float,
    invariant_measure, mc_dp_agreement, regime_sequence, simulate,
};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("runtime {:.1}s over {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
    } else {
        Ok(())
    }
}

fn c1_identities() -> Outcome {
    let start = Instant::now();
    let m = fix_zz();
    let w = Window::symmetric(64, &m).map_err(|e| e.to_string())?;
    let exact = identity_suite_exact(&m, 40, w).map_err(|e| e.to_string())?;
    let float = identity_suite_float(&m, 40, w, 2f64.ln()).map_err(|e| e.to_string())?;
    let pp = fix_pp();
    let (lp, _) = argmin_laplace(&pp.right).map_err(|e| e.to_string())?;
    let wp = Window::symmetric(64, &pp).map_err(|e| e.to_string())?;
    let float_pp = identity_suite_float(&pp, 20, wp, lp).map_err(|e| e.to_string())?;
    within(Duration::from_secs(10), start)?;
    check(
        exact.exact_zero && float.passed && float_pp.passed,
        format!(
            "rational residuals exactly zero: {}; float max {:.1e}; FIX-PP tilt at lambda' max {:.1e}; {:.1}s",
            exact.exact_zero,
            float.decomposition.max(float.tilting).max(float.duality),
            float_pp.decomposition.max(float_pp.tilting).max(float_pp.duality),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn c2_positive_recurrent() -> Outcome {
    let start = Instant::now();
    let m = fix_pn();
    let w = Window::symmetric(64, &m).map_err(|e| e.to_string())?;
    let nu = invariant_measure(&m, w, 1e-15).map_err(|e| e.to_string())?;
    let nu1 = nu.iter().find(|p| p.0 == 1).unwrap().1;
    let seq = marginal_sequence::<f64>(&m, -1, 1, 2048, w, 1.0).map_err(|e| e.to_string())?;
    let err = (seq.values[2048] - nu1).abs();
    within(Duration::from_secs(30), start)?;
    check(err <= 1e-6, format!("|P_-1[X_2048 = 1] - nu(1)| = {err:.2e}, nu(1) = {nu1:.6}"))
}

fn local_limit(name: &str, m: &oscillax::model::OscillatingModel) -> Outcome {
    let start = Instant::now();
    let w = Window::symmetric(512, m).map_err(|e| e.to_string())?;
    let seq = marginal_sequence_scaled(m, 0, 0, 4096, 0.0, w).map_err(|e| e.to_string())?;
    let fit = fit_rate_exponent_window(&seq, 512, 4096).map_err(|e| e.to_string())?;
    let s = spectral_for(m).map_err(|e| e.to_string())?;
    let c0 = predicted_constant_cy(m, 0, &s).map_err(|e| e.to_string())?;
    let plateau = 64.0 * seq.ln_values[4096].exp();
    let rel = (plateau / c0 - 1.0).abs();
    within(Duration::from_secs(120), start)?;
    check(
        (fit.rho_hat - 1.0).abs() <= 1e-3 && (fit.beta_hat - 0.5).abs() <= 0.05 && rel <= 0.1,
        format!(
            "{name}: rho {:.6}, beta {:.4}, sqrt(n) a_n {:.6} vs C_0 {:.6} (rel {:.1e})",
            fit.rho_hat, fit.beta_hat, plateau, c0, rel
        ),
    )
}

fn c3_zz() -> Outcome {
    local_limit("FIX-ZZ", &fix_zz())
}

fn c4_pz() -> Outcome {
    let direct = local_limit("FIX-PZ", &fix_pz())?;
    let mirrored = local_limit("mirror of FIX-PZ", &fix_pz().mirror())?;
    Ok(format!("{direct}; {mirrored}"))
}

fn fit_regime(name: &str, m: &oscillax::model::OscillatingModel, rho: f64, beta: f64, beta_tol: f64) -> Outcome {
    let (_, seq): (_, LogSequence) = regime_sequence(m, 0, 0, 4096).map_err(|e| e.to_string())?;
    let fit = fit_rate_exponent_window(&seq, 512, 4096).map_err(|e| e.to_string())?;
    check(
        (fit.rho_hat - rho).abs() <= 1e-3 && (fit.beta_hat - beta).abs() <= beta_tol,
        format!("{name}: rho {:.6} (want {rho:.6}), beta {:.4} (want {beta})", fit.rho_hat, fit.beta_hat),
    )
}

fn c5_zp() -> Outcome {
    fit_regime("FIX-ZP", &fix_zp(), 1.0, 1.5, 0.1)
}

fn c6_pp() -> Outcome {
    let start = Instant::now();
    let rho = 3f64.powf(2.0 / 3.0) / 8.0 + 0.125 + 0.75 * 3f64.powf(-1.0 / 3.0);
    let r = fit_regime("FIX-PP", &fix_pp(), rho, 1.5, 0.15);
    within(Duration::from_secs(120), start)?;
    r
}

fn c7_subcases() -> Outcome {
    let start = Instant::now();
    let fixtures = subcase_fixtures();
    let mut lines = Vec::new();
    let mut ok = fixtures.len() == 10;
    for f in &fixtures {
        match asymptotics_suite(&f.model, 0, 0, 4096) {
            Ok(r) => {
                ok &= r.passed;
                lines.push(format!(
                    "{} {}: rho {:.5}/{:.5} beta {:.3}/{}",
                    f.subcase,
                    if r.passed { "ok" } else { "FAIL" },
                    r.fit.rho_hat,
                    r.predicted_rate,
                    r.fit.beta_hat,
                    r.predicted_exponent
                ));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("{} error {e}", f.subcase));
            }
        }
    }
    within(Duration::from_secs(1800), start)?;
    check(ok, format!("{} fixtures; {}", fixtures.len(), lines.join("; ")))
}

fn c8_constants() -> Outcome {
    let c = fluctuation_constants(&mu_a(), 4096).map_err(|e| e.to_string())?;
    let v = [c.c_direct, c.c_spitzer, c.c_ladder];
    let worst = v.iter().flat_map(|a| v.iter().map(move |b| (a / b - 1.0).abs())).fold(0.0, f64::max);
    check(
        worst <= 0.01,
        format!("direct {:.8}, spitzer {:.8}, ladder {:.8}, max rel gap {worst:.1e}", v[0], v[1], v[2]),
    )
}

fn c9_passage_tail() -> Outcome {
    let d = mu_a();
    let c = c_direct(&d).map_err(|e| e.to_string())?;
    let lad = ladder_data(&d, LadderVariant::StrictAsc, 8).map_err(|e| e.to_string())?;
    let hl = HalfLine { side: Side::FromNegative, edge: -1 };
    let n = 4096usize;
    let mut parts = Vec::new();
    let mut ok = true;
    for x in [-1i64, -3] {
        let w = Window { lo: x - 2 * n as i64 - 1, hi: 4 };
        let fp = first_passage_kernel::<f64>(&d, hl, x, n, w, false).map_err(|e| e.to_string())?;
        let p = fp.kernel.entries[n].total();
        let r = (n as f64).powf(1.5) * p / lad.renewal.v(-x) / c;
        ok &= (r - 1.0).abs() <= 0.05;
        parts.push(format!("x={x}: ratio {r:.4}"));
    }
    check(ok, format!("{} against c = {c:.6}", parts.join(", ")))
}

fn c10_gouezel() -> Outcome {
    let m = fix_zz();
    let w = Window::symmetric(512, &m).map_err(|e| e.to_string())?;
    let r = convergence_suite(&m, 4096, w).map_err(|e| e.to_string())?;
    let g = r.gouezel_final();
    let bounded = r.l2_bound.iter().all(|b| b.is_finite());
    let trend = r.l2_bound.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-9));
    check(
        (0.9..=1.1).contains(&g) && bounded,
        format!(
            "sqrt(n) T_n(0,0) c / nu(0) = {g:.4} at n=4096; l2 bound {:?} (non-increasing: {trend})",
            r.l2_bound.iter().map(|b| format!("{b:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn c11_spectral() -> Outcome {
    let m = fix_zp();
    let q = default_aggregate(&m).map_err(|e| e.to_string())?;
    let w = Window { lo: -64, hi: 64 };
    let a = power_iterate(&q, w, WeightSpec::default()).map_err(|e| e.to_string())?;
    let b = power_iterate(&q, w.doubled(), WeightSpec::default()).map_err(|e| e.to_string())?;
    let stable = (a.rho_psi - b.rho_psi).abs();
    check(
        a.rho_psi <= 1.0 - 1e-3 && a.min_h() > 0.0 && a.residual <= 1e-8 && stable <= 1e-4,
        format!(
            "rho_psi {:.8}, min H {:.3e}, residual {:.1e}, window doubling shift {stable:.1e}",
            a.rho_psi,
            a.min_h(),
            a.residual
        ),
    )
}

fn c12_monte_carlo() -> Outcome {
    let m = fix_zz();
    let seed = 0x5eed_0001;
    let a = simulate(&m, 0, 50, 100_000, seed);
    let b = simulate(&m, 0, 50, 100_000, seed);
    let same = serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap();
    let agree = mc_dp_agreement(&m, &a).map_err(|e| e.to_string())?;
    check(
        agree.failures == 0 && same,
        format!(
            "{} cells, {} beyond 4 SE, max z {:.2} at (n={}, y={}); reproducible: {same}",
            agree.cells, agree.failures, agree.max_z, agree.n, agree.y
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("exact identities", c1_identities),
        ("(P,N) convergence to the invariant law", c2_positive_recurrent),
        ("(Z,Z) local limit", c3_zz),
        ("(P,Z) local limit", c4_pz),
        ("(Z,P) transient decay", c5_zp),
        ("(P,P) subcase B2", c6_pp),
        ("subcase coverage", c7_subcases),
        ("fluctuation constants", c8_constants),
        ("first-passage tail", c9_passage_tail),
        ("operator renewal limit", c10_gouezel),
        ("spectral data of Q", c11_spectral),
        ("Monte Carlo against DP", c12_monte_carlo),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("criterion {:>2} PASS  {name} [{secs:.1}s]: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} [{secs:.1}s]: {d}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
