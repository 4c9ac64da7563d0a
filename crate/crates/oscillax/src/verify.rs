//! Asymptotic fitting, Monte Carlo simulation and the exact-identity and
//! convergence suites that tie the dynamic programs to the limit theorems.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_rational::BigRational;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::evolve::{
    excursion_functions, first_passage_kernel, marginal_sequence_scaled, marginal_table, EvolveError, Evolver,
    HalfLine, LogSequence, ModelLaws, Scalar, Side, Window,
};
use crate::ladder::{c_direct, ladder_epochs, ladder_heights, renewal_function, LadderError, LadderVariant};
use crate::model::{laplace, laplace_exact, tilt, tilt_exact, Drift, DriftCase, LatticeDist, OscillatingModel};
use crate::numeric::{linear_fit, median, rpow};
use crate::regimes::{classify, select_tilt, spectral_for, RegimeError, RegimePrediction};
use crate::switching::{
    build_q, convolution_powers, default_aggregate, power_iterate, r_tail, renewal_rows, renewal_sequence,
    weighted_norm, SwitchingError, WeightSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("only {usable} usable points, need at least {needed}")]
    TooFewPoints { usable: usize, needed: usize },
    #[error("window leak exceeds 1% of the sequence on {bad} of {total} points")]
    LeakDominated { bad: usize, total: usize },
    #[error("residual rms {0:.3e} exceeds 0.1")]
    SequenceTooNoisy(f64),
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error(transparent)]
    Switching(#[from] SwitchingError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error("plateau not reached: {0}")]
    PlateauNotReached(String),
    #[error("suite needs drift case (Z,Z) or (P,Z), got {0}")]
    Unsupported(DriftCase),
}

/// Fitted `a_n ~ C rho^n / n^beta`.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticFit {
    pub rho_hat: f64,
    pub beta_hat: f64,
    pub c_hat: f64,
    pub fit_window: (usize, usize),
    pub residual_rms: f64,
    /// `(n, a_n rho^-n n^beta)` over the fit window.
    pub plateau_series: Vec<(usize, f64)>,
}

pub const MIN_FIT_POINTS: usize = 64;

/// Fit over `[N/8, N]`.
pub fn fit_rate_exponent(seq: &LogSequence) -> Result<AsymptoticFit, FitError> {
    let n = seq.len().saturating_sub(1);
    fit_rate_exponent_window(seq, (n / 8).max(1), n)
}

/// Rate from Aitken extrapolation of the medians of `a_{n+1}/a_n` over the
/// dyadic blocks of the window, exponent by least squares of
/// `ln(a_n rho^-n)` against `-ln n`, constant from the plateau mean over the
/// top dyadic block. Points whose leak exceeds `a_n / 100` are discarded.
pub fn fit_rate_exponent_window(seq: &LogSequence, n_lo: usize, n_hi: usize) -> Result<AsymptoticFit, FitError> {
    let n_hi = n_hi.min(seq.len().saturating_sub(1));
    let n_lo = n_lo.max(1);
    if n_hi < n_lo {
        return Err(FitError::TooFewPoints { usable: 0, needed: MIN_FIT_POINTS });
    }
    let ok = |n: usize| {
        let v = seq.ln_values[n];
        v.is_finite() && seq.ln_leak[n] <= v + 0.01f64.ln()
    };
    let total = n_hi - n_lo + 1;
    let usable: Vec<usize> = (n_lo..=n_hi).filter(|&n| ok(n)).collect();
    if usable.len() < MIN_FIT_POINTS {
        let finite = (n_lo..=n_hi).filter(|&n| seq.ln_values[n].is_finite()).count();
        if finite >= MIN_FIT_POINTS {
            return Err(FitError::LeakDominated { bad: total - usable.len(), total });
        }
        return Err(FitError::TooFewPoints { usable: usable.len(), needed: MIN_FIT_POINTS });
    }

    // block medians of ln(a_{n+1}/a_n), keyed by floor(log2 n)
    let mut blocks: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &n in &usable {
        if n < n_hi && ok(n + 1) {
            blocks.entry(n.ilog2()).or_default().push(seq.ln_values[n + 1] - seq.ln_values[n]);
        }
    }
    let meds: Vec<f64> = blocks.values().filter(|v| v.len() >= 8).map(|v| median(v)).collect();
    let ln_rho = match meds.as_slice() {
        [] => median(&blocks.values().flatten().copied().collect::<Vec<_>>()),
        [r] | [_, r] => *r,
        [.., r0, r1, r2] => {
            let d1 = r2 - r1;
            let d0 = r1 - r0;
            let den = d1 - d0;
            if den.abs() > 1e-300 && (d1 / d0).abs() < 1.0 && d0 != 0.0 {
                r2 - d1 * d1 / den
            } else {
                *r2
            }
        }
    };
    let rho_hat = ln_rho.exp().min(1.0);
    let ln_rho = rho_hat.ln();

    let xs: Vec<f64> = usable.iter().map(|&n| -(n as f64).ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|&n| seq.ln_values[n] - n as f64 * ln_rho).collect();
    let (_, beta_hat, residual_rms) = linear_fit(&xs, &ys);
    if residual_rms > 0.1 {
        return Err(FitError::SequenceTooNoisy(residual_rms));
    }
    let plateau_series: Vec<(usize, f64)> =
        usable.iter().zip(&ys).map(|(&n, y)| (n, (y + beta_hat * (n as f64).ln()).exp())).collect();
    let top = n_hi.ilog2();
    let top_vals: Vec<f64> = plateau_series.iter().filter(|(n, _)| n.ilog2() == top).map(|&(_, v)| v).collect();
    let tail = if top_vals.len() >= 8 {
        top_vals
    } else {
        plateau_series[plateau_series.len() / 2..].iter().map(|&(_, v)| v).collect()
    };
    let c_hat = tail.iter().sum::<f64>() / tail.len() as f64;
    Ok(AsymptoticFit {
        rho_hat,
        beta_hat,
        c_hat,
        fit_window: (usable[0], *usable.last().unwrap()),
        residual_rms,
        plateau_series,
    })
}

/// `P_x[X_n = y]` for `n <= N` in log form, evolved under the tilt chosen for
/// the model's regime on the full reachable window.
pub fn regime_sequence(
    model: &OscillatingModel,
    x: i64,
    y: i64,
    horizon: usize,
) -> Result<(RegimePrediction, LogSequence), VerifyError> {
    let pred = classify(model)?;
    let (t, _, _) = select_tilt(model, &pred)?;
    let window = Window::reachable(model, x, horizon);
    let seq = marginal_sequence_scaled(model, x, y, horizon, t, window)?;
    Ok((pred, seq))
}

/// Fitted against predicted rate and exponent.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticsReport {
    pub drift_case: String,
    pub subcase: Option<String>,
    pub predicted_rate: f64,
    pub predicted_exponent: f64,
    pub fit: AsymptoticFit,
    pub rate_tol: f64,
    pub exponent_tol: f64,
    pub passed: bool,
}

/// Rate within `1e-3`; exponent within `0.15` when it is `3/2`, else `0.05`.
pub fn asymptotics_suite(
    model: &OscillatingModel,
    x: i64,
    y: i64,
    horizon: usize,
) -> Result<AsymptoticsReport, VerifyError> {
    let (pred, seq) = regime_sequence(model, x, y, horizon)?;
    let fit = fit_rate_exponent(&seq)?;
    let rate_tol = 1e-3;
    let exponent_tol = if pred.exponent > 1.0 { 0.15 } else { 0.05 };
    let passed = (fit.rho_hat - pred.rate).abs() <= rate_tol && (fit.beta_hat - pred.exponent).abs() <= exponent_tol;
    Ok(AsymptoticsReport {
        drift_case: pred.drift_case.to_string(),
        subcase: pred.subcase.map(|s| s.to_string()),
        predicted_rate: pred.rate,
        predicted_exponent: pred.exponent,
        fit,
        rate_tol,
        exponent_tol,
        passed,
    })
}

/// Invariant law of the one-step chain restricted to the window: the left
/// Perron vector of the truncated kernel, normalised to mass one.
pub fn invariant_measure(model: &OscillatingModel, window: Window, tol: f64) -> Result<Vec<(i64, f64)>, VerifyError> {
    let laws = ModelLaws::<f64>::new(model)?;
    let mut ev = Evolver::new(laws.clone(), window, 0)?;
    let mut prev = vec![0.0; window.width()];
    for _ in 0..100_000 {
        for _ in 0..16 {
            ev.advance();
        }
        let total = ev.total();
        let state: Vec<f64> = ev.state().iter().map(|v| v / total).collect();
        let diff = state.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if diff < tol {
            return Ok(window.sites().zip(state).collect());
        }
        ev = Evolver::from_state(laws.clone(), window, state.clone());
        prev = state;
    }
    Err(VerifyError::PlateauNotReached("invariant measure power iteration".into()))
}

/// Monte Carlo counts and switching statistics.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SimResult {
    pub x: i64,
    pub paths: u64,
    pub seed: u64,
    pub n_steps: usize,
    /// `counts[n][y]` at the recorded times.
    pub counts: BTreeMap<usize, BTreeMap<i64, u64>>,
    /// Histogram of the first switching time; paths without a switch by
    /// `n_steps` are counted under `n_steps + 1`.
    pub first_switch: BTreeMap<usize, u64>,
    /// `switch_counts[n][k]`: paths with exactly `k` switches by time `n`.
    pub switch_counts: BTreeMap<usize, BTreeMap<u64, u64>>,
    /// Paths with no switch in `(n_steps / 2, n_steps]`.
    pub quiet_second_half: u64,
}

impl SimResult {
    pub fn empirical(&self, n: usize, y: i64) -> f64 {
        let hits = self.counts.get(&n).and_then(|c| c.get(&y)).copied().unwrap_or(0);
        hits as f64 / self.paths as f64
    }

    fn merge(&mut self, other: SimResult) {
        self.paths += other.paths;
        for (n, c) in other.counts {
            let e = self.counts.entry(n).or_default();
            for (y, h) in c {
                *e.entry(y).or_default() += h;
            }
        }
        for (k, h) in other.first_switch {
            *self.first_switch.entry(k).or_default() += h;
        }
        for (n, c) in other.switch_counts {
            let e = self.switch_counts.entry(n).or_default();
            for (k, h) in c {
                *e.entry(k).or_default() += h;
            }
        }
        self.quiet_second_half += other.quiet_second_half;
    }
}

/// Times at which marginals are recorded: powers of two up to `n`, and `n`.
pub fn recorded_times(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..usize::BITS).map(|k| 1usize << k).take_while(|&m| m <= n).collect();
    if n > 0 && v.last() != Some(&n) {
        v.push(n);
    }
    v
}

const PATHS_PER_STREAM: u64 = 4096;

struct Sampler {
    values: Vec<i64>,
    index: WeightedIndex<f64>,
}

impl Sampler {
    fn new(d: &LatticeDist) -> Self {
        let (values, weights): (Vec<i64>, Vec<f64>) = d.atoms().iter().cloned().unzip();
        Sampler { values, index: WeightedIndex::new(weights).expect("positive weights") }
    }
}

/// Direct sampling of the recursion. Paths are split into fixed blocks, each
/// driven by its own ChaCha stream of the seed, so the result does not
/// depend on the thread count.
pub fn simulate(model: &OscillatingModel, x: i64, n_steps: usize, n_paths: u64, seed: u64) -> SimResult {
    let samplers = [Sampler::new(&model.left), Sampler::new(&model.origin), Sampler::new(&model.right)];
    let times = recorded_times(n_steps);
    let empty = || SimResult {
        x,
        paths: 0,
        seed,
        n_steps,
        counts: BTreeMap::new(),
        first_switch: BTreeMap::new(),
        switch_counts: BTreeMap::new(),
        quiet_second_half: 0,
    };
    let blocks = n_paths.div_ceil(PATHS_PER_STREAM);
    let parts: Vec<SimResult> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let count = PATHS_PER_STREAM.min(n_paths - b * PATHS_PER_STREAM);
            let mut out = empty();
            out.paths = count;
            for _ in 0..count {
                let mut z = x;
                let mut switches = 0u64;
                let mut first = None;
                let mut last_switch = 0usize;
                let mut ti = 0;
                for n in 1..=n_steps {
                    let s = &samplers[(model.medium(z) + 1) as usize];
                    let next = z + s.values[s.index.sample(&mut rng)];
                    if model.medium(next) != model.medium(z) {
                        switches += 1;
                        first.get_or_insert(n);
                        last_switch = n;
                    }
                    z = next;
                    if times.get(ti) == Some(&n) {
                        *out.counts.entry(n).or_default().entry(z).or_default() += 1;
                        *out.switch_counts.entry(n).or_default().entry(switches).or_default() += 1;
                        ti += 1;
                    }
                }
                *out.first_switch.entry(first.unwrap_or(n_steps + 1)).or_default() += 1;
                if last_switch <= n_steps / 2 {
                    out.quiet_second_half += 1;
                }
            }
            out
        })
        .collect();
    let mut res = empty();
    for p in parts {
        res.merge(p);
    }
    res
}

/// Largest deviation between Monte Carlo and DP marginals in units of the
/// binomial standard error, over every recorded time and every site with
/// positive probability or a hit.
pub fn mc_dp_agreement(model: &OscillatingModel, sim: &SimResult) -> Result<McAgreement, VerifyError> {
    let window = Window::reachable(model, sim.x, sim.n_steps);
    let table = marginal_table::<f64>(model, sim.x, sim.n_steps, window)?;
    let paths = sim.paths as f64;
    let mut worst = McAgreement { max_z: 0.0, n: 0, y: 0, cells: 0, failures: 0 };
    for (&n, counts) in &sim.counts {
        let seg = &table.entries[n];
        let mut ys: Vec<i64> = seg.iter().filter(|(_, v)| **v > 0.0).map(|(y, _)| y).collect();
        ys.extend(counts.keys());
        ys.sort_unstable();
        ys.dedup();
        for y in ys {
            let p = seg.value(y);
            let e = sim.empirical(n, y);
            let se = (p * (1.0 - p) / paths).sqrt();
            let z = if se > 0.0 {
                (e - p).abs() / se
            } else if e == p {
                0.0
            } else {
                f64::INFINITY
            };
            worst.cells += 1;
            if z > 4.0 {
                worst.failures += 1;
            }
            if z > worst.max_z {
                worst.max_z = z;
                worst.n = n;
                worst.y = y;
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct McAgreement {
    /// Largest `|empirical - DP| / SE`.
    pub max_z: f64,
    pub n: usize,
    pub y: i64,
    pub cells: usize,
    /// Cells beyond four standard errors.
    pub failures: usize,
}

/// Residuals of the exact identities.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub rational: bool,
    pub horizon: usize,
    pub window: Window,
    pub decomposition: f64,
    pub tilting: f64,
    pub duality: f64,
    /// All residuals exactly zero (meaningful in rational mode).
    pub exact_zero: bool,
    pub passed: bool,
}

pub const FLOAT_IDENTITY_TOL: f64 = 1e-12;

struct Residual<T> {
    max: f64,
    all_zero: bool,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar> Residual<T> {
    fn new() -> Self {
        Residual { max: 0.0, all_zero: true, _t: std::marker::PhantomData }
    }

    fn add(&mut self, a: T, b: T, scale: f64) {
        let d = a - b;
        if !d.is_zero() {
            self.all_zero = false;
            self.max = self.max.max(d.to_f64().abs() / scale);
        }
    }
}

/// Starting sites and targets used by the suites.
fn probe_sites(model: &OscillatingModel, window: Window) -> (Vec<i64>, Vec<i64>) {
    let mut xs = model.arrival_set();
    for x in [-5, -2, 2, 5] {
        if window.contains(x) && !xs.contains(&x) {
            xs.push(x);
        }
    }
    xs.sort_unstable();
    let ys: Vec<i64> = (-10..=10).filter(|&y| window.contains(y)).collect();
    (xs, ys)
}

/// `P_x[X_n = y] = V_{n,y}(x) 1{x not an arrival} + sum_k sum_z T_k(x, z) V_{n-k,y}(z)`
/// on the window.
fn decomposition_residual<T: Scalar>(
    model: &OscillatingModel,
    horizon: usize,
    window: Window,
) -> Result<Residual<T>, VerifyError> {
    let (xs, ys) = probe_sites(model, window);
    let kernel = build_q::<T>(model, horizon, window, &xs)?;
    let t = renewal_sequence(&kernel, horizon);
    let rows = renewal_rows(&kernel, &t);
    let arrivals = kernel.arrivals().to_vec();
    let excursions: Vec<_> =
        ys.iter().map(|&y| excursion_functions::<T>(model, y, horizon, window)).collect::<Result<_, _>>()?;
    let mut res = Residual::new();
    for &x in &xs {
        let direct = marginal_table::<T>(model, x, horizon, window)?;
        for (yi, &y) in ys.iter().enumerate() {
            let v = &excursions[yi];
            for n in 0..=horizon {
                let mut acc = if arrivals.contains(&x) { T::zero() } else { v.entries[n].value(x) };
                for k in 0..=n {
                    for &z in &arrivals {
                        let tk = rows.get(k, x, z);
                        if !tk.is_zero() {
                            acc = acc + tk * v.entries[n - k].value(z);
                        }
                    }
                }
                res.add(direct.entries[n].value(y), acc, 1.0);
            }
        }
    }
    Ok(res)
}

/// For each side law and start, `u^{y-x} Q_n(x, y) = L(u)^n Q^u_n(x, y)` on
/// both the absorbed and the surviving mass.
fn tilting_residual<T: Scalar>(
    model: &OscillatingModel,
    horizon: usize,
    window: Window,
    tilted: impl Fn(&LatticeDist) -> Option<(LatticeDist, T)>,
    upow: impl Fn(i64) -> T,
) -> Result<Residual<T>, VerifyError> {
    let (xs, _) = probe_sites(model, window);
    let mut res = Residual::new();
    for side in [Side::FromNegative, Side::FromPositive] {
        let hl = HalfLine::for_convention(side, model.convention);
        let dist = match side {
            Side::FromNegative => &model.left,
            Side::FromPositive => &model.right,
        };
        let (td, l) = tilted(dist).ok_or(EvolveError::NotExact)?;
        for &x in xs.iter().filter(|&&x| hl.contains(x)) {
            let a = first_passage_kernel::<T>(dist, hl, x, horizon, window, true)?;
            let b = first_passage_kernel::<T>(&td, hl, x, horizon, window, true)?;
            let (pa, pb) = (a.profile.unwrap(), b.profile.unwrap());
            let mut ln = T::one();
            for n in 0..=horizon {
                let scale = ln.to_f64().max(1.0);
                for (y, v) in a.kernel.entries[n].iter() {
                    res.add(upow(y - x) * v.clone(), ln.clone() * b.kernel.entries[n].value(y), scale);
                }
                for (y, v) in pa[n].iter() {
                    res.add(upow(y - x) * v.clone(), ln.clone() * pb[n].value(y), scale);
                }
                ln = ln * l.clone();
            }
        }
    }
    Ok(res)
}

/// `P[tau_- > n, S_n = z]` (weak descent) equals the probability that `n` is
/// a strict ascending ladder epoch with height `z`.
fn duality_residual<T: Scalar>(model: &OscillatingModel, horizon: usize) -> Result<Residual<T>, VerifyError> {
    let mut res = Residual::new();
    for dist in [&model.left, &model.right] {
        let desc = ladder_epochs::<T>(dist, LadderVariant::WeakDesc, horizon).ok_or(EvolveError::NotExact)?;
        let asc = ladder_epochs::<T>(dist, LadderVariant::StrictAsc, horizon).ok_or(EvolveError::NotExact)?;
        // renewal[n][z] over z in 0..=max_jump * n
        let width = (dist.max_support().max(1) as usize) * horizon + 1;
        let mut renewal: Vec<Vec<T>> = vec![vec![T::zero(); width]; horizon + 1];
        renewal[0][0] = T::one();
        for n in 1..=horizon {
            for k in 1..=n {
                for (h, p) in asc.by_time[k].iter() {
                    if p.is_zero() {
                        continue;
                    }
                    for z in 0..width {
                        let w = z + h as usize;
                        if w >= width || renewal[n - k][z].is_zero() {
                            continue;
                        }
                        let add = p.clone() * renewal[n - k][z].clone();
                        renewal[n][w] = renewal[n][w].clone() + add;
                    }
                }
            }
        }
        for n in 0..=horizon {
            for (z, r) in renewal[n].iter().enumerate() {
                res.add(desc.profile[n].value(z as i64), r.clone(), 1.0);
            }
            for (z, v) in desc.profile[n].iter() {
                if z < 0 || z as usize >= width {
                    res.add(v.clone(), T::zero(), 1.0);
                }
            }
        }
    }
    Ok(res)
}

/// Exact identities in rational arithmetic; the tilt uses `e^t = 2`.
pub fn identity_suite_exact(
    model: &OscillatingModel,
    horizon: usize,
    window: Window,
) -> Result<IdentityReport, VerifyError> {
    let u = BigRational::from_integer(2.into());
    let d = decomposition_residual::<BigRational>(model, horizon, window)?;
    let t = tilting_residual::<BigRational>(
        model,
        horizon,
        window,
        |dist| Some((tilt_exact(dist, &u)?, laplace_exact(dist, &u)?)),
        |k| rpow(&u, k),
    )?;
    let du = duality_residual::<BigRational>(model, horizon)?;
    let exact_zero = d.all_zero && t.all_zero && du.all_zero;
    Ok(IdentityReport {
        rational: true,
        horizon,
        window,
        decomposition: d.max,
        tilting: t.max,
        duality: du.max,
        exact_zero,
        passed: exact_zero,
    })
}

/// The same identities in double precision with tilt parameter `t`.
pub fn identity_suite_float(
    model: &OscillatingModel,
    horizon: usize,
    window: Window,
    t: f64,
) -> Result<IdentityReport, VerifyError> {
    let d = decomposition_residual::<f64>(model, horizon, window)?;
    let tr = tilting_residual::<f64>(
        model,
        horizon,
        window,
        |dist| Some((tilt(dist, t).ok()?, laplace(dist, t).ok()?)),
        |k| (t * k as f64).exp(),
    )?;
    let du = duality_residual::<f64>(model, horizon)?;
    let exact_zero = d.all_zero && tr.all_zero && du.all_zero;
    let passed = d.max <= FLOAT_IDENTITY_TOL && tr.max <= FLOAT_IDENTITY_TOL && du.max <= FLOAT_IDENTITY_TOL;
    Ok(IdentityReport {
        rational: false,
        horizon,
        window,
        decomposition: d.max,
        tilting: tr.max,
        duality: du.max,
        exact_zero,
        passed,
    })
}

/// Scalar renewal sequence `T_0 = 1`, `T_n = sum_{k=1}^n q_k T_{n-k}`.
pub fn scalar_renewal(q: &[f64], horizon: usize) -> Vec<f64> {
    let mut t = vec![0.0; horizon + 1];
    t[0] = 1.0;
    for n in 1..=horizon {
        t[n] = (1..=n.min(q.len() - 1)).map(|k| q[k] * t[n - k]).sum();
    }
    t
}

/// `K` in `P_nu[C_1 > n] ~ K / sqrt(n)`:
/// `2 (c sum_x nu(x) V_{*+}(edge + 1 - x) + c' sum_x nu(x) V'_{*-}(x))`, where
/// each centered side contributes and a drifting side does not.
pub fn return_tail_constant(model: &OscillatingModel, nu: &[(i64, f64)]) -> Result<f64, VerifyError> {
    let edge = HalfLine::for_convention(Side::FromNegative, model.convention).edge;
    let reach = nu.iter().map(|&(x, _)| x.unsigned_abs() as usize).max().unwrap_or(1) + 4;
    let side = |dist: &LatticeDist| -> Result<Option<(f64, crate::ladder::Renewal)>, VerifyError> {
        if dist.drift() != Drift::Z {
            return Ok(None);
        }
        let h = ladder_heights(dist, LadderVariant::StrictAsc)?;
        Ok(Some((c_direct(dist)?, renewal_function(&h, reach, 1e-12)?)))
    };
    let left = side(&model.left)?;
    let right = side(&model.right.mirror())?;
    let mut k = 0.0;
    for &(x, w) in nu {
        if x <= edge {
            if let Some((c, r)) = &left {
                k += w * c * r.v(edge + 1 - x);
            }
        } else if x >= 1 {
            if let Some((c, r)) = &right {
                k += w * c * r.v(x);
            }
        }
    }
    Ok(2.0 * k)
}

/// Plateau tables of the operator renewal theorem.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub drift_case: String,
    pub horizon: usize,
    /// `K` with `bold c = pi K`.
    pub tail_constant: f64,
    /// `(n, sqrt(n) T_n(x, x) bold_c / nu_Q(x))` at dyadic `n`, for the origin
    /// or the first arrival site.
    pub gouezel_series: Vec<(usize, f64)>,
    pub gouezel_site: i64,
    /// `(n, sqrt(n) P_nu[C_1 > n] / K)` at dyadic `n`.
    pub tail_series: Vec<(usize, f64)>,
    /// `sup_n n^{3/2} |Q_n^(l)| / l^2` for `l = 1..=5` in the weighted norm.
    pub l2_bound: Vec<f64>,
}

impl ConvergenceReport {
    pub fn gouezel_final(&self) -> f64 {
        self.gouezel_series.last().map_or(f64::NAN, |p| p.1)
    }

    pub fn tail_final(&self) -> f64 {
        self.tail_series.last().map_or(f64::NAN, |p| p.1)
    }
}

/// Operator renewal diagnostics for `(Z,Z)` and `(P,Z)` models.
pub fn convergence_suite(
    model: &OscillatingModel,
    horizon: usize,
    window: Window,
) -> Result<ConvergenceReport, VerifyError> {
    let case = model.drift_case;
    if case != DriftCase(Drift::Z, Drift::Z) && case != DriftCase(Drift::P, Drift::Z) {
        return Err(VerifyError::Unsupported(case));
    }
    let spectral = spectral_for(model)?;
    let nu = spectral.nu.clone().ok_or(RegimeError::NoInvariantMeasure)?;
    let k = return_tail_constant(model, &nu)?;
    let bold_c = PI * k;
    let arrivals = model.arrival_set();
    let site = if arrivals.contains(&0) { 0 } else { arrivals[0] };
    let kernel = build_q::<f64>(model, horizon, window, &arrivals)?;
    let t = renewal_sequence(&kernel, horizon);
    let nu_site = spectral.nu_at(site);
    let dyadic: Vec<usize> = recorded_times(horizon).into_iter().filter(|&n| n >= 16).collect();
    let gouezel_series =
        dyadic.iter().map(|&n| (n, (n as f64).sqrt() * t.get(n, site, site) * bold_c / nu_site)).collect();
    let tail = r_tail(&kernel, &nu);
    let tail_series = dyadic.iter().map(|&n| (n, (n as f64).sqrt() * tail[n] / k)).collect();

    let short = horizon.min(256);
    let small = build_q::<f64>(model, short, window, &arrivals)?;
    let powers = convolution_powers(&small, 5);
    let weight = WeightSpec::default();
    let l2_bound = powers
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let l = (i + 1) as f64;
            (1..=p.horizon())
                .map(|n| (n as f64).powf(1.5) * weighted_norm(&p.rows, &p.cols, &p.data[n], weight))
                .fold(0.0, f64::max)
                / (l * l)
        })
        .collect();
    Ok(ConvergenceReport {
        drift_case: case.to_string(),
        horizon,
        tail_constant: k,
        gouezel_series,
        gouezel_site: site,
        tail_series,
        l2_bound,
    })
}

/// Spectral radius of `Q` on two windows, for the stability check.
pub fn spectral_stability(model: &OscillatingModel, window: Window) -> Result<(f64, f64), VerifyError> {
    let q = default_aggregate(model)?;
    let a = power_iterate(&q, window, WeightSpec::default())?;
    let b = power_iterate(&q, window.doubled(), WeightSpec::default())?;
    Ok((a.rho_psi, b.rho_psi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, n: usize) -> LogSequence {
        LogSequence {
            ln_values: (0..=n).map(|k| if k == 0 { 0.0 } else { f(k as f64) }).collect(),
            ln_leak: vec![f64::NEG_INFINITY; n + 1],
        }
    }

    #[test]
    fn fit_geometric_polynomial() {
        let s = synthetic(|n| n * 0.7f64.ln() - 1.5 * n.ln(), 4096);
        let f = fit_rate_exponent(&s).unwrap();
        assert!((f.rho_hat - 0.7).abs() < 1e-6, "{}", f.rho_hat);
        assert!((f.beta_hat - 1.5).abs() < 0.02, "{}", f.beta_hat);
        assert!((f.c_hat - 1.0).abs() < 0.05);
    }

    #[test]
    fn fit_inverse_sqrt() {
        let s = synthetic(|n| -0.5 * n.ln() + 0.3f64.ln(), 4096);
        let f = fit_rate_exponent(&s).unwrap();
        assert!((f.rho_hat - 1.0).abs() < 1e-6);
        assert!((f.beta_hat - 0.5).abs() < 0.02);
        assert!((f.c_hat - 0.3).abs() < 0.01);
    }

    #[test]
    fn fit_rejects_short_and_leaky() {
        let s = synthetic(|n| -n.ln(), 40);
        assert!(matches!(fit_rate_exponent_window(&s, 1, 40), Err(FitError::TooFewPoints { .. })));
        let mut s = synthetic(|n| -n.ln(), 1024);
        s.ln_leak = vec![0.0; 1025];
        assert!(matches!(fit_rate_exponent(&s), Err(FitError::LeakDominated { .. })));
    }

    #[test]
    fn recorded_times_are_dyadic_plus_end() {
        assert_eq!(recorded_times(50), vec![1, 2, 4, 8, 16, 32, 50]);
        assert_eq!(recorded_times(8), vec![1, 2, 4, 8]);
    }

    #[test]
    fn scalar_renewal_geometric() {
        let q: Vec<f64> = (0..200).map(|n| if n == 0 { 0.0 } else { 0.3 * 0.7f64.powi(n - 1) }).collect();
        let t = scalar_renewal(&q, 150);
        assert!((t[150] - 0.3).abs() < 1e-12);
    }
}
