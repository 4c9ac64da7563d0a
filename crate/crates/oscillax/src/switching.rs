//! Switching kernels `Q_n`, the aggregate kernel `Q`, renewal operators
//! `T_n`, spectral data of `Q`, Doob transforms, tilted kernels and the limit
//! operator `E`.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::evolve::{switching_problem, EvolveError, HalfLine, Law, Scalar, Side, Window};
use crate::ladder::{ladder_heights, renewal_function, ExitKernel, LadderError, LadderVariant, DEFAULT_REACH};
use crate::model::{laplace, tilt, validate_model, Convention, ModelError, OscillatingModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwitchingError {
    #[error("row {0} lies outside the window")]
    RowOutsideWindow(i64),
    #[error("power iteration did not converge after {iterations} iterations (gap estimate {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },
    #[error("tilted kernels need the two-media convention")]
    ConventionMismatch,
    #[error("the limit operator needs a drift case with a centered side or none")]
    Unsupported,
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Sequence `n = 0..=N` of matrices with explicit row and column labels.
#[derive(Clone, Debug)]
pub struct KernelSeq<T> {
    pub rows: Vec<i64>,
    pub cols: Vec<i64>,
    /// `data[n][r * cols.len() + c]`.
    pub data: Vec<Vec<T>>,
}

impl<T: Scalar> KernelSeq<T> {
    pub fn horizon(&self) -> usize {
        self.data.len() - 1
    }

    pub fn row_index(&self, x: i64) -> Option<usize> {
        self.rows.iter().position(|&r| r == x)
    }

    pub fn col_index(&self, y: i64) -> Option<usize> {
        self.cols.iter().position(|&c| c == y)
    }

    /// Entry `(x, y)` at time `n`; zero for unknown labels.
    pub fn get(&self, n: usize, x: i64, y: i64) -> T {
        match (self.row_index(x), self.col_index(y)) {
            (Some(r), Some(c)) => self.data[n][r * self.cols.len() + c].clone(),
            _ => T::zero(),
        }
    }

    /// Restriction to the given rows, which must be present.
    pub fn restrict_rows(&self, rows: &[i64]) -> KernelSeq<T> {
        let idx: Vec<usize> = rows.iter().map(|&x| self.row_index(x).expect("row present")).collect();
        let m = self.cols.len();
        let data = self
            .data
            .iter()
            .map(|d| idx.iter().flat_map(|&r| d[r * m..(r + 1) * m].iter().cloned()).collect())
            .collect();
        KernelSeq { rows: rows.to_vec(), cols: self.cols.clone(), data }
    }

    /// Time convolution `(self * other)_n = sum_k self_k other_{n-k}`, where
    /// `other` has rows equal to this sequence's columns.
    pub fn convolve(&self, other: &KernelSeq<T>) -> KernelSeq<T> {
        assert_eq!(self.cols, other.rows, "inner labels must agree");
        let (r, m, c) = (self.rows.len(), self.cols.len(), other.cols.len());
        let h = self.horizon().min(other.horizon());
        let mut data = Vec::with_capacity(h + 1);
        for n in 0..=h {
            let mut out = vec![T::zero(); r * c];
            for k in 0..=n {
                let a = &self.data[k];
                let b = &other.data[n - k];
                for i in 0..r {
                    for z in 0..m {
                        let aiz = &a[i * m + z];
                        if aiz.is_zero() {
                            continue;
                        }
                        for j in 0..c {
                            let bz = &b[z * c + j];
                            if !bz.is_zero() {
                                out[i * c + j] = out[i * c + j].clone() + aiz.clone() * bz.clone();
                            }
                        }
                    }
                }
            }
            data.push(out);
        }
        KernelSeq { rows: self.rows.clone(), cols: other.cols.clone(), data }
    }

    /// `sum_n` of the sequence.
    pub fn total(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.rows.len() * self.cols.len()];
        for d in &self.data {
            for (a, v) in acc.iter_mut().zip(d) {
                *a = a.clone() + v.clone();
            }
        }
        acc
    }
}

/// Switching kernels `Q_n(x, y)` for tracked rows `x` and arrival sites `y`.
#[derive(Clone, Debug)]
pub struct SwitchingKernel<T> {
    pub window: Window,
    pub convention: Convention,
    pub q: KernelSeq<T>,
    /// `survival[n][r] = P_x[C_1 > n]` for paths kept in the window.
    pub survival: Vec<Vec<T>>,
    /// `leak[n][r]`: probability of leaving the window before switching.
    pub leak: Vec<Vec<T>>,
}

impl<T: Scalar> SwitchingKernel<T> {
    pub fn horizon(&self) -> usize {
        self.q.horizon()
    }

    pub fn arrivals(&self) -> &[i64] {
        &self.q.cols
    }

    pub fn rows(&self) -> &[i64] {
        &self.q.rows
    }
}

struct SideProblem<T> {
    law: Law<T>,
    half_line: HalfLine,
    lo: i64,
    hi: i64,
    // (row slot, domain index)
    rows: Vec<(usize, usize)>,
}

impl<T: Scalar> SideProblem<T> {
    // One backward step of the killed walk: out(x) = sum_j mu(j) v(x + j).
    fn apply(&self, v: &[T]) -> Vec<T> {
        let width = v.len() as i64;
        let mut out = vec![T::zero(); v.len()];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (k, p) in self.law.probs.iter().enumerate() {
                let j = i as i64 + self.law.offset + k as i64;
                if j < 0 || j >= width || p.is_zero() {
                    continue;
                }
                let w = &v[j as usize];
                if !w.is_zero() {
                    acc = acc + p.clone() * w.clone();
                }
            }
            *slot = acc;
        }
        out
    }
}

/// Builds `Q_n` for `n <= N` on the given rows by backward dynamic
/// programming: for each arrival site `y` the vector `x -> Q_n(x, y)` is
/// propagated over the whole half-line window at once.
pub fn build_q<T: Scalar>(
    model: &OscillatingModel,
    horizon: usize,
    window: Window,
    rows: &[i64],
) -> Result<SwitchingKernel<T>, SwitchingError> {
    for &x in rows {
        if !window.contains(x) {
            return Err(SwitchingError::RowOutsideWindow(x));
        }
    }
    let arrivals = model.arrival_set();
    let na = arrivals.len();
    let nr = rows.len();
    let col = |y: i64| arrivals.iter().position(|&a| a == y);
    let mut data = vec![vec![T::zero(); nr * na]; horizon + 1];
    let mut survival = vec![vec![T::one(); nr]; horizon + 1];
    let mut leak = vec![vec![T::zero(); nr]; horizon + 1];

    let conv = model.convention;
    let sides = [
        (&model.left, HalfLine::for_convention(Side::FromNegative, conv)),
        (&model.right, HalfLine::for_convention(Side::FromPositive, conv)),
    ];
    for (dist, half_line) in sides {
        let law = T::law(dist).ok_or(EvolveError::NotExact)?;
        let (lo, hi) = match half_line.side {
            Side::FromNegative => (window.lo, half_line.edge),
            Side::FromPositive => (half_line.edge, window.hi),
        };
        let side_rows: Vec<(usize, usize)> = rows
            .iter()
            .enumerate()
            .filter(|(_, &x)| half_line.contains(x))
            .map(|(r, &x)| (r, (x - lo) as usize))
            .collect();
        if side_rows.is_empty() {
            continue;
        }
        let prob = SideProblem { law, half_line, lo, hi, rows: side_rows };
        let width = (prob.hi - prob.lo + 1) as usize;
        let site = |i: usize| prob.lo + i as i64;
        // arrival targets
        let (alo, ahi) = half_line.arrivals(prob.law.min_jump(), prob.law.max_jump());
        for y in alo..=ahi {
            let Some(c) = col(y) else { continue };
            let mut v: Vec<T> = (0..width).map(|i| prob.law.get(y - site(i))).collect();
            for n in 1..=horizon {
                for &(r, i) in &prob.rows {
                    data[n][r * na + c] = v[i].clone();
                }
                if n < horizon {
                    v = prob.apply(&v);
                }
            }
        }
        // survival inside the window, and mass leaving the window
        let mut s: Vec<T> = vec![T::one(); width];
        let mut e: Vec<T> = vec![T::zero(); width];
        let out_now: Vec<T> = (0..width)
            .map(|i| {
                let z = site(i);
                prob.law
                    .probs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| {
                        let w = z + prob.law.offset + *k as i64;
                        prob.half_line.contains(w) && (w < prob.lo || w > prob.hi)
                    })
                    .fold(T::zero(), |a, (_, p)| a + p.clone())
            })
            .collect();
        for n in 1..=horizon {
            s = prob.apply(&s);
            let pe = prob.apply(&e);
            e = pe.into_iter().zip(&out_now).map(|(a, b)| a + b.clone()).collect();
            for &(r, i) in &prob.rows {
                survival[n][r] = s[i].clone();
                leak[n][r] = e[i].clone();
            }
        }
    }
    if conv == Convention::ThreeMedia {
        if let Some(r) = rows.iter().position(|&x| x == 0) {
            let law0 = T::law(&model.origin).ok_or(EvolveError::NotExact)?;
            let stay = law0.get(0);
            let mut pow = T::one();
            for n in 1..=horizon {
                for (c, &y) in arrivals.iter().enumerate() {
                    if y != 0 {
                        data[n][r * na + c] = pow.clone() * law0.get(y);
                    }
                }
                pow = pow * stay.clone();
                survival[n][r] = pow.clone();
            }
        }
    }
    Ok(SwitchingKernel {
        window,
        convention: conv,
        q: KernelSeq { rows: rows.to_vec(), cols: arrivals, data },
        survival,
        leak,
    })
}

/// Identity on the arrival set as a kernel sequence with only `n = 0`.
fn identity_seq<T: Scalar>(labels: &[i64], horizon: usize) -> KernelSeq<T> {
    let m = labels.len();
    let mut data = vec![vec![T::zero(); m * m]; horizon + 1];
    for i in 0..m {
        data[0][i * m + i] = T::one();
    }
    KernelSeq { rows: labels.to_vec(), cols: labels.to_vec(), data }
}

/// Renewal operators `T_n = sum_l Q_n^(l)` on the arrival set, through
/// `T_0 = I` and `T_n = sum_{k=1}^n Q_k T_{n-k}`. Needs every arrival site
/// among the kernel rows.
pub fn renewal_sequence<T: Scalar>(kernel: &SwitchingKernel<T>, horizon: usize) -> KernelSeq<T> {
    let a = kernel.arrivals().to_vec();
    let qa = kernel.q.restrict_rows(&a);
    let h = horizon.min(qa.horizon());
    let m = a.len();
    let mut t: Vec<Vec<T>> = Vec::with_capacity(h + 1);
    t.push(identity_seq::<T>(&a, 0).data.remove(0));
    for n in 1..=h {
        let mut out = vec![T::zero(); m * m];
        for k in 1..=n {
            let q = &qa.data[k];
            let prev = &t[n - k];
            for i in 0..m {
                for z in 0..m {
                    let qiz = &q[i * m + z];
                    if qiz.is_zero() {
                        continue;
                    }
                    for j in 0..m {
                        let p = &prev[z * m + j];
                        if !p.is_zero() {
                            out[i * m + j] = out[i * m + j].clone() + qiz.clone() * p.clone();
                        }
                    }
                }
            }
        }
        t.push(out);
    }
    KernelSeq { rows: a.clone(), cols: a, data: t }
}

/// Renewal rows `T_n(x, .)` for any tracked row `x`, from the arrival-set
/// operators: `T_n(x, .) = 1{x=.} 1{n=0} + sum_k Q_k(x, .) T_{n-k}`.
pub fn renewal_rows<T: Scalar>(kernel: &SwitchingKernel<T>, t: &KernelSeq<T>) -> KernelSeq<T> {
    let mut out = kernel.q.convolve(t);
    for (r, &x) in out.rows.clone().iter().enumerate() {
        if let Some(c) = out.col_index(x) {
            let m = out.cols.len();
            out.data[0][r * m + c] = T::one();
        }
    }
    out
}

/// `Q_n^(l)` for `l = 1..=max_l` on the kernel rows, by repeated convolution.
pub fn convolution_powers<T: Scalar>(kernel: &SwitchingKernel<T>, max_l: usize) -> Vec<KernelSeq<T>> {
    let a = kernel.arrivals().to_vec();
    let qa = kernel.q.restrict_rows(&a);
    let mut powers_a = vec![qa.clone()];
    let mut out = vec![kernel.q.clone()];
    for _ in 1..max_l {
        let next_rows = kernel.q.convolve(powers_a.last().unwrap());
        let next_a = qa.convolve(powers_a.last().unwrap());
        out.push(next_rows);
        powers_a.push(next_a);
    }
    out
}

/// Infinite-horizon kernel `Q(x, y) = P_x[C_1 < inf, X_{C_1} = y]`.
#[derive(Clone, Debug)]
pub struct AggregateQ {
    pub convention: Convention,
    pub arrivals: Vec<i64>,
    left: ExitKernel,
    right: ExitKernel,
    origin: Vec<(i64, f64)>,
}

impl AggregateQ {
    pub fn new(model: &OscillatingModel, reach: usize) -> Result<Self, SwitchingError> {
        let conv = model.convention;
        let left = ExitKernel::solve(&model.left, HalfLine::for_convention(Side::FromNegative, conv), reach)?;
        let right = ExitKernel::solve(&model.right, HalfLine::for_convention(Side::FromPositive, conv), reach)?;
        let p0 = model.origin.prob(0);
        let origin = model.origin.atoms().iter().filter(|a| a.0 != 0).map(|&(y, p)| (y, p / (1.0 - p0))).collect();
        Ok(AggregateQ { convention: conv, arrivals: model.arrival_set(), left, right, origin })
    }

    pub fn get(&self, x: i64, y: i64) -> f64 {
        if self.left.half_line.contains(x) {
            self.left.get(x, y)
        } else if self.right.half_line.contains(x) {
            self.right.get(x, y)
        } else {
            self.origin.iter().find(|a| a.0 == y).map_or(0.0, |a| a.1)
        }
    }

    /// `Q(x, .)` on the arrival set.
    pub fn row(&self, x: i64) -> Vec<f64> {
        self.arrivals.iter().map(|&y| self.get(x, y)).collect()
    }

    /// `P_x[C_1 = inf]`.
    pub fn defect(&self, x: i64) -> f64 {
        (1.0 - self.row(x).iter().sum::<f64>()).max(0.0)
    }

    /// `Q` restricted to the arrival set, row-major.
    pub fn on_arrivals(&self) -> Vec<f64> {
        self.arrivals.iter().flat_map(|&x| self.row(x)).collect()
    }
}

/// Weight `Psi` of the weighted sup norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum WeightSpec {
    /// `1 + |x|^{1 + delta}`.
    Polynomial { delta: f64 },
    /// `e^{rate_neg |x|}` for `x <= 0`, `e^{rate_pos x}` for `x > 0`.
    Exponential { rate_neg: f64, rate_pos: f64 },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Polynomial { delta: 0.5 }
    }
}

impl WeightSpec {
    pub fn eval(&self, x: i64) -> f64 {
        match *self {
            WeightSpec::Polynomial { delta } => 1.0 + (x.abs() as f64).powf(1.0 + delta),
            WeightSpec::Exponential { rate_neg, rate_pos } => {
                if x <= 0 {
                    (rate_neg * x.abs() as f64).exp()
                } else {
                    (rate_pos * x as f64).exp()
                }
            }
        }
    }

    /// Default exponential weight for a profile: rates `|lambda'| + delta`
    /// below the origin and `|lambda| + delta` above, `delta = 0.1`.
    pub fn exponential_for(lambda: f64, lambda_prime: f64) -> Self {
        WeightSpec::Exponential { rate_neg: lambda_prime.abs() + 0.1, rate_pos: lambda.abs() + 0.1 }
    }
}

/// Dominant eigenpair of `Q` on a window.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    pub rho_psi: f64,
    pub window: Window,
    /// `H(x)` for `x` in the window, normalised by `sup H / Psi = 1`.
    pub h: Vec<f64>,
    /// Left eigenvector on the arrival set when `Q` is markovian.
    pub nu: Option<Vec<(i64, f64)>>,
    pub residual: f64,
    /// `1 - sum_y Q(x, y)` over the window.
    pub defect: Vec<f64>,
    pub markovian: bool,
    pub iterations: usize,
    pub gap: f64,
}

impl SpectralData {
    pub fn h_at(&self, x: i64) -> f64 {
        self.h[self.window.index(x)]
    }

    pub fn nu_at(&self, y: i64) -> f64 {
        self.nu.as_ref().and_then(|v| v.iter().find(|a| a.0 == y)).map_or(0.0, |a| a.1)
    }

    pub fn min_h(&self) -> f64 {
        self.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_defect(&self) -> f64 {
        self.defect.iter().cloned().fold(0.0, f64::max)
    }
}

/// Largest acceptable defect for `Q` to count as markovian.
pub const MARKOV_DEFECT: f64 = 1e-9;
const MAX_ITER: usize = 100_000;

/// Power iteration for `Q H = rho H` in the `Psi`-weighted sup norm.
///
/// Rows of `Q` are supported on the arrival set, so the iteration runs on
/// that set and `H` elsewhere is `Q H / rho`.
pub fn power_iterate(q: &AggregateQ, window: Window, weight: WeightSpec) -> Result<SpectralData, SwitchingError> {
    let a = &q.arrivals;
    let m = a.len();
    let qa = q.on_arrivals();
    let mut h = vec![1.0; m];
    let mut prev_rq = f64::NAN;
    let mut rq = f64::NAN;
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let next: Vec<f64> = (0..m).map(|i| (0..m).map(|j| qa[i * m + j] * h[j]).sum()).collect();
        let num: f64 = next.iter().zip(&h).map(|(a, b)| a * b).sum();
        let den: f64 = h.iter().map(|b| b * b).sum();
        rq = num / den;
        let norm = next.iter().cloned().fold(0.0, f64::max);
        if norm == 0.0 {
            return Err(SwitchingError::NoConvergence { iterations, gap: 0.0 });
        }
        h = next.iter().map(|v| v / norm).collect();
        history.push(rq);
        if (rq - prev_rq).abs() <= 1e-12 * rq.abs().max(1e-300) && iterations > 3 {
            converged = true;
            break;
        }
        prev_rq = rq;
    }
    let gap = gap_estimate(&history);
    if !converged {
        return Err(SwitchingError::NoConvergence { iterations, gap });
    }
    let rho = rq;
    let mut full: Vec<f64> =
        window.sites().map(|x| q.row(x).iter().zip(&h).map(|(p, v)| p * v).sum::<f64>() / rho).collect();
    for (i, &y) in a.iter().enumerate() {
        if window.contains(y) {
            full[window.index(y)] = h[i];
        }
    }
    let scale = window.sites().map(|x| full[window.index(x)] / weight.eval(x)).fold(0.0, f64::max);
    for v in &mut full {
        *v /= scale;
    }
    let mut residual: f64 = 0.0;
    for x in window.sites() {
        let qh: f64 = a
            .iter()
            .map(|&y| {
                let hy = if window.contains(y) { full[window.index(y)] } else { 0.0 };
                q.get(x, y) * hy
            })
            .sum();
        residual = residual.max((qh - rho * full[window.index(x)]).abs() / weight.eval(x));
    }
    let defect: Vec<f64> = window.sites().map(|x| q.defect(x)).collect();
    let markovian = a.iter().all(|&x| q.defect(x) <= MARKOV_DEFECT);
    let nu = markovian.then(|| {
        let nu = left_perron(&qa, m);
        a.iter().cloned().zip(nu).collect()
    });
    Ok(SpectralData { rho_psi: rho, window, h: full, nu, residual, defect, markovian, iterations, gap })
}

fn gap_estimate(history: &[f64]) -> f64 {
    let n = history.len();
    if n < 4 {
        return f64::NAN;
    }
    let d1 = (history[n - 2] - history[n - 3]).abs();
    let d2 = (history[n - 1] - history[n - 2]).abs();
    if d1 == 0.0 {
        0.0
    } else {
        d2 / d1
    }
}

/// Left Perron vector of a small row-stochastic matrix, summing to 1.
pub fn left_perron(q: &[f64], m: usize) -> Vec<f64> {
    let mut nu = vec![1.0 / m as f64; m];
    for _ in 0..MAX_ITER {
        let mut next = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                next[j] += nu[i] * q[i * m + j];
            }
        }
        // damping removes periodicity without changing the fixed point
        for j in 0..m {
            next[j] = 0.5 * (next[j] + nu[j]);
        }
        let s: f64 = next.iter().sum();
        for v in &mut next {
            *v /= s;
        }
        let diff: f64 = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum();
        nu = next;
        if diff < 1e-16 {
            break;
        }
    }
    nu
}

/// `^H Q_n(x, y) = Q_n(x, y) H(y) / (rho H(x))`.
pub fn doob_transform(q: &KernelSeq<f64>, h: impl Fn(i64) -> f64, rho_psi: f64) -> KernelSeq<f64> {
    let m = q.cols.len();
    let hc: Vec<f64> = q.cols.iter().map(|&y| h(y)).collect();
    let hr: Vec<f64> = q.rows.iter().map(|&x| h(x)).collect();
    let data = q
        .data
        .iter()
        .map(|d| d.iter().enumerate().map(|(k, v)| v * hc[k % m] / (rho_psi * hr[k / m])).collect())
        .collect();
    KernelSeq { rows: q.rows.clone(), cols: q.cols.clone(), data }
}

/// Tilted kernels `Q~_n(x, y) = Q_n(x, y) e^{-t(x-y)} / R^n` with `R` the
/// larger of `L(t)` and `L'(t)`: the switching kernels of the tilted laws,
/// damped by `(L_side(t) / R)^n` on the side with the smaller transform.
pub fn tilted_kernels(
    model: &OscillatingModel,
    t: f64,
    horizon: usize,
    window: Window,
    rows: &[i64],
) -> Result<SwitchingKernel<f64>, SwitchingError> {
    if model.convention != Convention::TwoMedia {
        return Err(SwitchingError::ConventionMismatch);
    }
    let l = laplace(&model.left, t)?;
    let lp = laplace(&model.right, t)?;
    let r = l.max(lp);
    let left = tilt(&model.left, t)?;
    let right = tilt(&model.right, t)?;
    let tilted = validate_model(left.clone(), left, right)?;
    let mut k = build_q::<f64>(&tilted, horizon, window, rows)?;
    let m = k.q.cols.len();
    for (ri, &x) in k.q.rows.clone().iter().enumerate() {
        let w = if x <= 0 { l / r } else { lp / r };
        let mut f = 1.0;
        for n in 0..=horizon {
            for c in 0..m {
                k.q.data[n][ri * m + c] *= f;
            }
            k.survival[n][ri] *= f;
            f *= w;
        }
    }
    Ok(k)
}

/// Limit `E(x, y) = lim n^{3/2} Q_n(x, y)` on given rows and the arrival set.
///
/// Centered sides contribute
/// `V_{*+}(|x - a|) sum_{w >= 1} V_-(w) mu(w + y - a) / (sigma sqrt(2 pi))`
/// with `a` the absorption threshold (mirrored on the right); drifted sides
/// and the origin row give zero.
pub fn limit_operator_e(model: &OscillatingModel, rows: &[i64]) -> Result<KernelSeq<f64>, SwitchingError> {
    let conv = model.convention;
    let arrivals = model.arrival_set();
    let left_hl = HalfLine::for_convention(Side::FromNegative, conv);
    let right_hl = HalfLine::for_convention(Side::FromPositive, conv);
    let side_fn = |dist: &crate::model::LatticeDist| -> Result<Option<(Vec<f64>, Vec<f64>, f64)>, SwitchingError> {
        if dist.drift() != crate::model::Drift::Z {
            return Ok(None);
        }
        let xmax = 4096;
        let up = renewal_function(&ladder_heights(dist, LadderVariant::StrictAsc)?, xmax, 1e-9)?;
        let down = renewal_function(&ladder_heights(dist, LadderVariant::WeakDesc)?, xmax, 1e-9)?;
        Ok(Some((up.renewal_v, down.renewal_v, dist.sigma())))
    };
    let left = side_fn(&model.left)?;
    let mirrored_right = model.right.mirror();
    let right = side_fn(&mirrored_right)?;
    let m = arrivals.len();
    let mut out = vec![0.0; rows.len() * m];
    let v_at = |v: &Vec<f64>, k: i64| v[(k as usize).min(v.len() - 1)];
    for (ri, &x) in rows.iter().enumerate() {
        for (ci, &y) in arrivals.iter().enumerate() {
            let val = if left_hl.contains(x) {
                left.as_ref().map_or(0.0, |(vp, vm, s)| {
                    // shift so that absorption happens on [0, inf)
                    let sh = left_hl.edge + 1;
                    let (xs, ys) = (x - sh, y - sh);
                    if ys < 0 {
                        return 0.0;
                    }
                    let sum: f64 = (1..=model.left.max_jump()).map(|w| v_at(vm, w) * model.left.prob(w + ys)).sum();
                    v_at(vp, -xs) * sum / (s * (2.0 * PI).sqrt())
                })
            } else if right_hl.contains(x) {
                right.as_ref().map_or(0.0, |(vp, vm, s)| {
                    let sh = right_hl.edge - 1;
                    let (xs, ys) = (-(x - sh), -(y - sh));
                    if ys < 0 {
                        return 0.0;
                    }
                    let sum: f64 =
                        (1..=mirrored_right.max_jump()).map(|w| v_at(vm, w) * mirrored_right.prob(w + ys)).sum();
                    v_at(vp, -xs) * sum / (s * (2.0 * PI).sqrt())
                })
            } else {
                0.0
            };
            out[ri * m + ci] = val;
        }
    }
    Ok(KernelSeq { rows: rows.to_vec(), cols: arrivals, data: vec![out] })
}

/// `E_l = sum_{i=0}^{l-1} Q^i E Q^{l-1-i}` on the arrival set, row-major.
pub fn limit_operator_e_l(q: &AggregateQ, e_on_arrivals: &[f64], l: usize) -> Vec<f64> {
    let m = q.arrivals.len();
    let qa = q.on_arrivals();
    let mul = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; m * m];
        for i in 0..m {
            for k in 0..m {
                for j in 0..m {
                    c[i * m + j] += a[i * m + k] * b[k * m + j];
                }
            }
        }
        c
    };
    let mut id = vec![0.0; m * m];
    for i in 0..m {
        id[i * m + i] = 1.0;
    }
    let mut pows = vec![id];
    for i in 1..l {
        let next = mul(&pows[i - 1], &qa);
        pows.push(next);
    }
    let mut acc = vec![0.0; m * m];
    for i in 0..l {
        let term = mul(&mul(&pows[i], e_on_arrivals), &pows[l - 1 - i]);
        for (a, t) in acc.iter_mut().zip(term) {
            *a += t;
        }
    }
    acc
}

/// `sum_{j > n} r_j = sum_x nu(x) P_x[C_1 > n]` for `n <= N`.
pub fn r_tail(kernel: &SwitchingKernel<f64>, nu: &[(i64, f64)]) -> Vec<f64> {
    (0..=kernel.horizon())
        .map(|n| nu.iter().map(|&(x, w)| kernel.q.row_index(x).map_or(0.0, |r| w * kernel.survival[n][r])).sum())
        .collect()
}

/// Weighted sup norm `sup_x (1/Psi(x)) sum_y |K(x, y)| Psi(y)` of one matrix.
pub fn weighted_norm(rows: &[i64], cols: &[i64], data: &[f64], weight: WeightSpec) -> f64 {
    let m = cols.len();
    rows.iter()
        .enumerate()
        .map(|(r, &x)| {
            let s: f64 = cols.iter().enumerate().map(|(c, &y)| data[r * m + c].abs() * weight.eval(y)).sum();
            s / weight.eval(x)
        })
        .fold(0.0, f64::max)
}

/// Arrival rows plus `+-2^k` inside the window: the rows tracked by default.
pub fn default_rows(model: &OscillatingModel, window: Window) -> Vec<i64> {
    let mut rows = model.arrival_set();
    let mut k = 1i64;
    while k <= window.hi.max(-window.lo) {
        for x in [-k, k] {
            if window.contains(x) {
                rows.push(x);
            }
        }
        k *= 2;
    }
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// Reach of the exit-kernel solve used by default.
pub fn default_aggregate(model: &OscillatingModel) -> Result<AggregateQ, SwitchingError> {
    AggregateQ::new(model, DEFAULT_REACH)
}

/// First-passage row of one start, for callers that need the forward route.
pub fn forward_row<T: Scalar>(
    model: &OscillatingModel,
    x: i64,
    horizon: usize,
    window: Window,
) -> Result<Option<crate::evolve::FirstPassage<T>>, SwitchingError> {
    match switching_problem(model, x) {
        Some((dist, hl)) => Ok(Some(crate::evolve::first_passage_kernel(dist, hl, x, horizon, window, false)?)),
        None => Ok(None),
    }
}
