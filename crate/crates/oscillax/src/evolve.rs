//! Exact dynamic programming on a truncated integer window: n-step marginals,
//! half-line first-passage kernels, survival and excursion functions.
//!
//! Every routine is generic over [`Scalar`], implemented for `f64` and for
//! exact rationals. Mass that leaves the window is accumulated as a leak, which
//! bounds the error of every reported probability.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::model::{laplace, tilt, Convention, LatticeDist, ModelError, OscillatingModel};
use crate::numeric::rat_to_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("window [{lo}, {hi}] is invalid: need lo < 0 < hi and width >= {min_width}")]
    BadWindow { lo: i64, hi: i64, min_width: i64 },
    #[error("site {0} lies outside the window")]
    OutsideWindow(i64),
    #[error("cumulative leak {leak:e} exceeds budget {budget:e} at step {step}")]
    WindowTooSmall { leak: f64, budget: f64, step: usize },
    #[error("start {x} is not in the domain of this first-passage problem")]
    ConventionMismatch { x: i64 },
    #[error("exact arithmetic requested for a law without rational probabilities")]
    NotExact,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Number type usable by the dynamic programs.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn to_f64(&self) -> f64;
    /// Dense law in this number type; `None` if it cannot be represented.
    fn law(dist: &LatticeDist) -> Option<Law<Self>>;
}

impl Scalar for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }
    fn law(dist: &LatticeDist) -> Option<Law<f64>> {
        let (offset, probs) = dist.dense();
        Some(Law { offset, probs })
    }
}

impl Scalar for BigRational {
    fn to_f64(&self) -> f64 {
        rat_to_f64(self)
    }
    fn law(dist: &LatticeDist) -> Option<Law<BigRational>> {
        let (offset, probs) = dist.dense_exact()?;
        Some(Law { offset, probs })
    }
}

/// Dense jump law: `probs[k]` is the probability of the jump `offset + k`.
#[derive(Clone, Debug)]
pub struct Law<T> {
    pub offset: i64,
    pub probs: Vec<T>,
}

impl<T: Scalar> Law<T> {
    pub fn get(&self, j: i64) -> T {
        let k = j - self.offset;
        if k < 0 || k >= self.probs.len() as i64 {
            T::zero()
        } else {
            self.probs[k as usize].clone()
        }
    }

    pub fn min_jump(&self) -> i64 {
        self.offset
    }

    pub fn max_jump(&self) -> i64 {
        self.offset + self.probs.len() as i64 - 1
    }

    fn scaled(&self, w: &T) -> Law<T> {
        Law { offset: self.offset, probs: self.probs.iter().map(|p| p.clone() * w.clone()).collect() }
    }
}

/// The three laws of a model in a given number type.
#[derive(Clone, Debug)]
pub struct ModelLaws<T> {
    pub left: Law<T>,
    pub origin: Law<T>,
    pub right: Law<T>,
}

impl<T: Scalar> ModelLaws<T> {
    pub fn new(model: &OscillatingModel) -> Result<Self, EvolveError> {
        Ok(ModelLaws {
            left: T::law(&model.left).ok_or(EvolveError::NotExact)?,
            origin: T::law(&model.origin).ok_or(EvolveError::NotExact)?,
            right: T::law(&model.right).ok_or(EvolveError::NotExact)?,
        })
    }

    pub fn at(&self, x: i64) -> &Law<T> {
        if x < 0 {
            &self.left
        } else if x == 0 {
            &self.origin
        } else {
            &self.right
        }
    }

    fn max_reach(&self) -> (i64, i64) {
        let lo = self.left.min_jump().min(self.origin.min_jump()).min(self.right.min_jump());
        let hi = self.left.max_jump().max(self.origin.max_jump()).max(self.right.max_jump());
        (lo, hi)
    }
}

/// Inclusive integer window `[lo, hi]` with `lo < 0 < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    /// Checks `lo < 0 < hi` and `width >= 3 * max_jump`.
    pub fn new(lo: i64, hi: i64, max_jump: i64) -> Result<Self, EvolveError> {
        let min_width = 3 * max_jump.max(1);
        if lo >= 0 || hi <= 0 || hi - lo + 1 < min_width {
            return Err(EvolveError::BadWindow { lo, hi, min_width });
        }
        Ok(Window { lo, hi })
    }

    /// `[-h, h]` checked against the model's largest jump.
    pub fn symmetric(h: i64, model: &OscillatingModel) -> Result<Self, EvolveError> {
        Self::new(-h, h, model.max_jump())
    }

    /// Default sizing: `h = max(64, 8 ceil(sqrt N) max_jump)`.
    pub fn default_for(model: &OscillatingModel, horizon: usize) -> Self {
        let s = (horizon as f64).sqrt().ceil() as i64;
        let h = 64.max(8 * s * model.max_jump());
        Window { lo: -h, hi: h }
    }

    /// Every site reachable from `x` within `horizon` steps.
    pub fn reachable(model: &OscillatingModel, x: i64, horizon: usize) -> Self {
        let n = horizon as i64;
        let m = model.max_jump();
        Window { lo: (x - m * n).min(-3 * m - 1), hi: (x + m * n).max(3 * m + 1) }
    }

    pub fn width(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn index(&self, x: i64) -> usize {
        (x - self.lo) as usize
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    pub fn doubled(&self) -> Window {
        Window { lo: 2 * self.lo, hi: 2 * self.hi }
    }
}

/// Contiguous run of values starting at site `start`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<T> {
    pub start: i64,
    pub values: Vec<T>,
}

impl<T: Scalar> Segment<T> {
    pub fn empty() -> Self {
        Segment { start: 0, values: Vec::new() }
    }

    pub fn value(&self, x: i64) -> T {
        let k = x - self.start;
        if k < 0 || k >= self.values.len() as i64 {
            T::zero()
        } else {
            self.values[k as usize].clone()
        }
    }

    pub fn total(&self) -> T {
        self.values.iter().cloned().fold(T::zero(), |a, b| a + b)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &T)> {
        self.values.iter().enumerate().map(move |(k, v)| (self.start + k as i64, v))
    }
}

/// What a [`KernelTable`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum KernelKind {
    Marginal,
    FirstPassage,
    Survival,
    Excursion,
    RenewalOp,
}

/// Family indexed by `n = 0..=horizon` of vectors over the window, with the
/// cumulative leak after each step.
#[derive(Clone, Debug)]
pub struct KernelTable<T> {
    pub kind: KernelKind,
    pub horizon: usize,
    pub window: Window,
    pub entries: Vec<Segment<T>>,
    pub leak: Vec<T>,
}

/// Probability sequence `a_n` with cumulative leak bounds, `n = 0..=N`.
#[derive(Clone, Debug)]
pub struct Sequence<T> {
    pub values: Vec<T>,
    pub leak: Vec<T>,
}

/// Sequence stored as natural logarithms, for values that underflow doubles.
#[derive(Clone, Debug, Serialize)]
pub struct LogSequence {
    pub ln_values: Vec<f64>,
    pub ln_leak: Vec<f64>,
}

impl LogSequence {
    pub fn from_plain(seq: &Sequence<f64>) -> Self {
        LogSequence {
            ln_values: seq.values.iter().map(|v| v.ln()).collect(),
            ln_leak: seq.leak.iter().map(|v| v.ln()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ln_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_values.is_empty()
    }
}

/// Forward DP state of the full walk.
#[derive(Clone, Debug)]
pub struct Evolver<T> {
    laws: ModelLaws<T>,
    window: Window,
    values: Vec<T>,
    scratch: Vec<T>,
    // active index range, inclusive
    first: usize,
    last: usize,
    cum_leak: T,
}

impl<T: Scalar> Evolver<T> {
    pub fn new(laws: ModelLaws<T>, window: Window, x: i64) -> Result<Self, EvolveError> {
        if !window.contains(x) {
            return Err(EvolveError::OutsideWindow(x));
        }
        let mut values = vec![T::zero(); window.width()];
        let i = window.index(x);
        values[i] = T::one();
        Ok(Evolver {
            scratch: vec![T::zero(); window.width()],
            laws,
            window,
            values,
            first: i,
            last: i,
            cum_leak: T::zero(),
        })
    }

    /// Starts from an arbitrary nonnegative vector over the window.
    pub fn from_state(laws: ModelLaws<T>, window: Window, state: Vec<T>) -> Self {
        assert_eq!(state.len(), window.width());
        let nz: Vec<usize> = state.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(i, _)| i).collect();
        let (first, last) = match (nz.first(), nz.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0, 0),
        };
        Evolver {
            scratch: vec![T::zero(); window.width()],
            laws,
            window,
            values: state,
            first,
            last,
            cum_leak: T::zero(),
        }
    }

    /// One step of the chain; returns the mass that left the window.
    pub fn advance(&mut self) -> T {
        let (jlo, jhi) = self.laws.max_reach();
        let w = self.window.width() as i64;
        let new_first = (self.first as i64 + jlo).max(0) as usize;
        let new_last = (self.last as i64 + jhi).min(w - 1) as usize;
        for v in &mut self.scratch[new_first..=new_last] {
            *v = T::zero();
        }
        let mut leaked = T::zero();
        for i in self.first..=self.last {
            if self.values[i].is_zero() {
                continue;
            }
            let s = self.values[i].clone();
            let x = self.window.lo + i as i64;
            let law = self.laws.at(x);
            let base = i as i64 + law.offset;
            for (k, p) in law.probs.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let j = base + k as i64;
                let m = s.clone() * p.clone();
                if j < 0 || j >= w {
                    leaked = leaked + m;
                } else {
                    let j = j as usize;
                    self.scratch[j] = self.scratch[j].clone() + m;
                }
            }
        }
        for v in &mut self.values[self.first..=self.last] {
            *v = T::zero();
        }
        std::mem::swap(&mut self.values, &mut self.scratch);
        self.first = new_first;
        self.last = new_last;
        self.shrink();
        self.cum_leak = self.cum_leak.clone() + leaked.clone();
        leaked
    }

    fn shrink(&mut self) {
        while self.first < self.last && self.values[self.first].is_zero() {
            self.first += 1;
        }
        while self.last > self.first && self.values[self.last].is_zero() {
            self.last -= 1;
        }
    }

    pub fn value(&self, y: i64) -> T {
        if self.window.contains(y) {
            self.values[self.window.index(y)].clone()
        } else {
            T::zero()
        }
    }

    pub fn state(&self) -> &[T] {
        &self.values
    }

    pub fn cumulative_leak(&self) -> T {
        self.cum_leak.clone()
    }

    pub fn total(&self) -> T {
        self.values[self.first..=self.last].iter().cloned().fold(T::zero(), |a, b| a + b)
    }

    pub fn window(&self) -> Window {
        self.window
    }

    fn active(&self) -> Segment<T> {
        Segment { start: self.window.lo + self.first as i64, values: self.values[self.first..=self.last].to_vec() }
    }
}

/// One step of the chain from `state`; returns the new state and the leak.
pub fn step<T: Scalar>(state: &[T], model: &OscillatingModel, window: Window) -> Result<(Vec<T>, T), EvolveError> {
    let laws = ModelLaws::new(model)?;
    let mut ev = Evolver::from_state(laws, window, state.to_vec());
    let leaked = ev.advance();
    Ok((ev.values, leaked))
}

/// `a_n = P_x[X_n = y]` for `n = 0..=N` with cumulative leak bounds.
///
/// Fails with [`EvolveError::WindowTooSmall`] when the leak exceeds `budget`.
pub fn marginal_sequence<T: Scalar>(
    model: &OscillatingModel,
    x: i64,
    y: i64,
    horizon: usize,
    window: Window,
    budget: f64,
) -> Result<Sequence<T>, EvolveError> {
    if !window.contains(y) {
        return Err(EvolveError::OutsideWindow(y));
    }
    let mut ev = Evolver::new(ModelLaws::<T>::new(model)?, window, x)?;
    let mut values = vec![ev.value(y)];
    let mut leak = vec![T::zero()];
    for n in 1..=horizon {
        ev.advance();
        let l = ev.cumulative_leak();
        if l.to_f64() > budget {
            return Err(EvolveError::WindowTooSmall { leak: l.to_f64(), budget, step: n });
        }
        values.push(ev.value(y));
        leak.push(l);
    }
    Ok(Sequence { values, leak })
}

/// Full marginal vectors `P_x[X_n = .]` for `n = 0..=N`.
pub fn marginal_table<T: Scalar>(
    model: &OscillatingModel,
    x: i64,
    horizon: usize,
    window: Window,
) -> Result<KernelTable<T>, EvolveError> {
    let mut ev = Evolver::new(ModelLaws::<T>::new(model)?, window, x)?;
    let mut entries = vec![ev.active()];
    let mut leak = vec![T::zero()];
    for _ in 0..horizon {
        ev.advance();
        entries.push(ev.active());
        leak.push(ev.cumulative_leak());
    }
    Ok(KernelTable { kind: KernelKind::Marginal, horizon, window, entries, leak })
}

/// Tilted and rescaled DP for sequences that underflow doubles.
///
/// The chain is evolved under the laws tilted by `t`, each weighted by
/// `L_side(t) / R` with `R` the largest of the three transforms, so the
/// evolution is substochastic. The vector is renormalised on the fly and the
/// scale kept in log form. Leaked tilted mass bounds the error because the
/// kernel is substochastic.
pub fn marginal_sequence_scaled(
    model: &OscillatingModel,
    x: i64,
    y: i64,
    horizon: usize,
    t: f64,
    window: Window,
) -> Result<LogSequence, EvolveError> {
    if !window.contains(y) {
        return Err(EvolveError::OutsideWindow(y));
    }
    let ls = [laplace(&model.left, t)?, laplace(&model.origin, t)?, laplace(&model.right, t)?];
    let r = ls.iter().cloned().fold(0.0f64, f64::max);
    let laws = ModelLaws {
        left: f64::law(&tilt(&model.left, t)?).unwrap().scaled(&(ls[0] / r)),
        origin: f64::law(&tilt(&model.origin, t)?).unwrap().scaled(&(ls[1] / r)),
        right: f64::law(&tilt(&model.right, t)?).unwrap().scaled(&(ls[2] / r)),
    };
    let mut ev = Evolver::new(laws, window, x)?;
    let ln_r = r.ln();
    let shift = t * (x - y) as f64;
    let mut log_scale = 0.0f64;
    let mut cum_ln = f64::NEG_INFINITY;
    let mut ln_values = vec![if x == y { 0.0 } else { f64::NEG_INFINITY }];
    let mut ln_leak = vec![f64::NEG_INFINITY];
    for n in 1..=horizon {
        let leaked = ev.advance() + ev.flush(1e-300);
        if leaked > 0.0 {
            cum_ln = log_add(cum_ln, leaked.ln() + log_scale);
        }
        let m = ev.values[ev.first..=ev.last].iter().cloned().fold(0.0, f64::max);
        if m > 0.0 && !(1e-100..=1e100).contains(&m) {
            for v in &mut ev.values[ev.first..=ev.last] {
                *v /= m;
            }
            log_scale += m.ln();
        }
        let base = n as f64 * ln_r + shift;
        ln_values.push(ev.value(y).ln() + log_scale + base);
        ln_leak.push(cum_ln + base);
    }
    Ok(LogSequence { ln_values, ln_leak })
}

impl Evolver<f64> {
    /// Zeroes entries below `floor` at the ends of the active range and
    /// returns their mass.
    fn flush(&mut self, floor: f64) -> f64 {
        let mut removed = 0.0;
        while self.first < self.last && self.values[self.first] < floor {
            removed += self.values[self.first];
            self.values[self.first] = 0.0;
            self.first += 1;
        }
        while self.last > self.first && self.values[self.last] < floor {
            removed += self.values[self.last];
            self.values[self.last] = 0.0;
            self.last -= 1;
        }
        removed
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Side of the half-line walk in a first-passage problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    /// Start below the origin, stop on first entry to `[a, inf)`.
    FromNegative,
    /// Start above the origin, stop on first entry to `(-inf, 0]`.
    FromPositive,
}

/// Absorption threshold and domain of a first-passage problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HalfLine {
    pub side: Side,
    /// Walk lives on `z <= edge` (FromNegative) or `z >= edge` (FromPositive).
    pub edge: i64,
}

impl HalfLine {
    /// Domain of the switching problem under a convention. Two media put the
    /// origin in the left medium.
    pub fn for_convention(side: Side, convention: Convention) -> Self {
        match (side, convention) {
            (Side::FromNegative, Convention::ThreeMedia) => HalfLine { side, edge: -1 },
            (Side::FromNegative, Convention::TwoMedia) => HalfLine { side, edge: 0 },
            (Side::FromPositive, _) => HalfLine { side, edge: 1 },
        }
    }

    pub fn contains(&self, z: i64) -> bool {
        match self.side {
            Side::FromNegative => z <= self.edge,
            Side::FromPositive => z >= self.edge,
        }
    }

    /// Sites where a walk with jumps in `[jlo, jhi]` can be absorbed.
    pub fn arrivals(&self, jlo: i64, jhi: i64) -> (i64, i64) {
        match self.side {
            Side::FromNegative => (self.edge + 1, self.edge + jhi.max(1)),
            Side::FromPositive => (self.edge + jlo.min(-1), self.edge - 1),
        }
    }
}

/// First-passage kernel of one half-line walk started at `x`.
#[derive(Clone, Debug)]
pub struct FirstPassage<T> {
    pub x: i64,
    pub half_line: HalfLine,
    /// `entries[n]` holds `Q_n(x, .)` on the arrival sites.
    pub kernel: KernelTable<T>,
    /// `P[tau(x) > n]` restricted to paths that stayed in the window.
    pub survival: Vec<T>,
    /// `P[tau(x) > n, x + S_n = .]` when requested.
    pub profile: Option<Vec<Segment<T>>>,
}

/// `Q_n(x, y) = P[tau(x) = n, x + S_n = y]` and survival for `n <= N`.
///
/// The identity `survival_n + sum_{k<=n} sum_y Q_k(x, y) + leak_n = 1` holds
/// exactly in rational arithmetic.
pub fn first_passage_kernel<T: Scalar>(
    dist: &LatticeDist,
    half_line: HalfLine,
    x: i64,
    horizon: usize,
    window: Window,
    keep_profile: bool,
) -> Result<FirstPassage<T>, EvolveError> {
    if !half_line.contains(x) {
        return Err(EvolveError::ConventionMismatch { x });
    }
    if !window.contains(x) {
        return Err(EvolveError::OutsideWindow(x));
    }
    let law = T::law(dist).ok_or(EvolveError::NotExact)?;
    let (dlo, dhi) = match half_line.side {
        Side::FromNegative => (window.lo, half_line.edge),
        Side::FromPositive => (half_line.edge, window.hi),
    };
    let (alo, ahi) = half_line.arrivals(law.min_jump(), law.max_jump());
    let width = (dhi - dlo + 1) as usize;
    let mut cur = vec![T::zero(); width];
    let mut next = vec![T::zero(); width];
    cur[(x - dlo) as usize] = T::one();
    let (mut first, mut last) = ((x - dlo) as usize, (x - dlo) as usize);
    let alen = (ahi - alo + 1) as usize;
    let mut entries = vec![Segment { start: alo, values: vec![T::zero(); alen] }];
    let mut leak = vec![T::zero()];
    let mut survival = vec![T::one()];
    let mut profile = keep_profile.then(|| vec![Segment { start: x, values: vec![T::one()] }]);
    let mut cum_leak = T::zero();
    for _ in 0..horizon {
        let mut arrived = vec![T::zero(); alen];
        let mut leaked = T::zero();
        let nf = (first as i64 + law.min_jump()).max(0) as usize;
        let nl = ((last as i64 + law.max_jump()).max(0) as usize).min(width - 1);
        for v in &mut next[nf.min(nl)..=nl] {
            *v = T::zero();
        }
        for i in first..=last {
            if cur[i].is_zero() {
                continue;
            }
            let s = cur[i].clone();
            let z = dlo + i as i64;
            for (k, p) in law.probs.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let w = z + law.offset + k as i64;
                let m = s.clone() * p.clone();
                if !half_line.contains(w) {
                    let a = (w - alo) as usize;
                    arrived[a] = arrived[a].clone() + m;
                } else if w < dlo || w > dhi {
                    leaked = leaked + m;
                } else {
                    let j = (w - dlo) as usize;
                    next[j] = next[j].clone() + m;
                }
            }
        }
        for v in &mut cur[first..=last] {
            *v = T::zero();
        }
        std::mem::swap(&mut cur, &mut next);
        first = nf.min(nl);
        last = nl;
        while first < last && cur[first].is_zero() {
            first += 1;
        }
        while last > first && cur[last].is_zero() {
            last -= 1;
        }
        cum_leak = cum_leak + leaked;
        let surv = cur[first..=last].iter().cloned().fold(T::zero(), |a, b| a + b);
        survival.push(surv);
        entries.push(Segment { start: alo, values: arrived });
        leak.push(cum_leak.clone());
        if let Some(p) = profile.as_mut() {
            p.push(Segment { start: dlo + first as i64, values: cur[first..=last].to_vec() });
        }
    }
    Ok(FirstPassage {
        x,
        half_line,
        kernel: KernelTable { kind: KernelKind::FirstPassage, horizon, window, entries, leak },
        survival,
        profile,
    })
}

/// Half-line problem and law governing the switching time from `x`.
/// Returns `None` for the origin under three media, which has its own row.
pub fn switching_problem(model: &OscillatingModel, x: i64) -> Option<(&LatticeDist, HalfLine)> {
    let conv = model.convention;
    let neg = HalfLine::for_convention(Side::FromNegative, conv);
    if neg.contains(x) {
        return Some((&model.left, neg));
    }
    if x >= 1 {
        return Some((&model.right, HalfLine::for_convention(Side::FromPositive, conv)));
    }
    None
}

/// Switching kernel row `Q_n(x, .)` for `n <= N` and the survival sequence,
/// for any start under the model's convention (including the origin row).
pub fn switching_row<T: Scalar>(
    model: &OscillatingModel,
    x: i64,
    horizon: usize,
    window: Window,
    keep_profile: bool,
) -> Result<FirstPassage<T>, EvolveError> {
    if let Some((dist, hl)) = switching_problem(model, x) {
        return first_passage_kernel(dist, hl, x, horizon, window, keep_profile);
    }
    // three-media origin: Q_n(0, y) = mu0(0)^{n-1} mu0(y) for y != 0
    let law = T::law(&model.origin).ok_or(EvolveError::NotExact)?;
    let stay = law.get(0);
    let (alo, ahi) = (law.min_jump(), law.max_jump());
    let alen = (ahi - alo + 1) as usize;
    let mut entries = vec![Segment { start: alo, values: vec![T::zero(); alen] }];
    let mut survival = vec![T::one()];
    let mut profile = keep_profile.then(|| vec![Segment { start: 0, values: vec![T::one()] }]);
    let mut pow = T::one();
    for _ in 0..horizon {
        let vals: Vec<T> = (alo..=ahi).map(|y| if y == 0 { T::zero() } else { pow.clone() * law.get(y) }).collect();
        entries.push(Segment { start: alo, values: vals });
        pow = pow * stay.clone();
        survival.push(pow.clone());
        if let Some(p) = profile.as_mut() {
            p.push(Segment { start: 0, values: vec![pow.clone()] });
        }
    }
    Ok(FirstPassage {
        x,
        half_line: HalfLine { side: Side::FromNegative, edge: 0 },
        kernel: KernelTable {
            kind: KernelKind::FirstPassage,
            horizon,
            window,
            entries,
            leak: vec![T::zero(); horizon + 1],
        },
        survival,
        profile,
    })
}

/// Excursion functions `V_{n,y}(x)` for all `x` in the window and `n <= N`:
/// the probability that the walk started at `x` has not switched by time `n`
/// and sits at `y`.
pub fn excursion_functions<T: Scalar>(
    model: &OscillatingModel,
    y: i64,
    horizon: usize,
    window: Window,
) -> Result<KernelTable<T>, EvolveError> {
    if !window.contains(y) {
        return Err(EvolveError::OutsideWindow(y));
    }
    let mut entries = Vec::with_capacity(horizon + 1);
    entries.push(Segment { start: y, values: vec![T::one()] });
    let zero_leak = vec![T::zero(); horizon + 1];
    match switching_problem(model, y) {
        None => {
            let stay = T::law(&model.origin).ok_or(EvolveError::NotExact)?.get(0);
            let mut pow = T::one();
            for _ in 0..horizon {
                pow = pow * stay.clone();
                entries.push(Segment { start: 0, values: vec![pow.clone()] });
            }
        }
        Some((dist, hl)) => {
            let law = T::law(dist).ok_or(EvolveError::NotExact)?;
            let (dlo, dhi) = match hl.side {
                Side::FromNegative => (window.lo, hl.edge),
                Side::FromPositive => (hl.edge, window.hi),
            };
            // backward recursion: V_n(x) = sum_j mu(j) V_{n-1}(x + j) over x + j in the domain
            let width = (dhi - dlo + 1) as usize;
            let mut cur = vec![T::zero(); width];
            cur[(y - dlo) as usize] = T::one();
            for _ in 0..horizon {
                let mut next = vec![T::zero(); width];
                for (i, slot) in next.iter_mut().enumerate() {
                    let z = dlo + i as i64;
                    let mut acc = T::zero();
                    for (k, p) in law.probs.iter().enumerate() {
                        let w = z + law.offset + k as i64;
                        if w < dlo || w > dhi || p.is_zero() {
                            continue;
                        }
                        let v = &cur[(w - dlo) as usize];
                        if !v.is_zero() {
                            acc = acc + p.clone() * v.clone();
                        }
                    }
                    *slot = acc;
                }
                entries.push(Segment { start: dlo, values: next.clone() });
                cur = next;
            }
        }
    }
    Ok(KernelTable { kind: KernelKind::Excursion, horizon, window, entries, leak: zero_leak })
}
