//! Ladder heights, renewal functions, half-line Green functions and the
//! fluctuation constants of a centered walk.
//!
//! Infinite-horizon quantities are obtained from the exit kernel of a
//! half-line, which solves a banded linear system. The horizon-limited
//! dynamic program is kept alongside it and reports its mass deficit.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::evolve::{HalfLine, Scalar, Segment, Side};
use crate::model::{LatticeDist, ZERO_DRIFT};
use crate::numeric::BandedMatrix;

/// Default truncation depth of the exit-kernel solve.
pub const DEFAULT_REACH: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LadderError {
    #[error("law is not centered (mean {0:e})")]
    NotCentered(f64),
    #[error("ladder mass deficit {deficit:e} exceeds tolerance {tol:e}")]
    DeficitTooLarge { deficit: f64, tol: f64 },
    #[error("exit-kernel system is singular")]
    Singular,
    #[error("ladder height law has no mass away from 0")]
    DegenerateHeights,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum LadderVariant {
    /// First time `S_n >= 0`, `n >= 1`.
    WeakAsc,
    /// First time `S_n >= 1`.
    StrictAsc,
    /// First time `S_n <= 0`, `n >= 1`.
    WeakDesc,
    /// First time `S_n <= -1`.
    StrictDesc,
}

impl LadderVariant {
    pub const ALL: [LadderVariant; 4] =
        [LadderVariant::WeakAsc, LadderVariant::StrictAsc, LadderVariant::WeakDesc, LadderVariant::StrictDesc];

    pub fn is_ascending(self) -> bool {
        matches!(self, LadderVariant::WeakAsc | LadderVariant::StrictAsc)
    }

    pub fn is_strict(self) -> bool {
        matches!(self, LadderVariant::StrictAsc | LadderVariant::StrictDesc)
    }

    /// Whether the walk may stay at `z` before the ladder epoch.
    pub fn stays(self, z: i64) -> bool {
        match self {
            LadderVariant::WeakAsc => z <= -1,
            LadderVariant::StrictAsc => z <= 0,
            LadderVariant::WeakDesc => z >= 1,
            LadderVariant::StrictDesc => z >= 0,
        }
    }
}

/// Law of the first ladder height, possibly defective.
#[derive(Clone, Debug, Serialize)]
pub struct HeightDist {
    pub variant: LadderVariant,
    /// `(height, probability)` in increasing height order.
    pub heights: Vec<(i64, f64)>,
    /// `1 - total mass`: truncation loss or the probability of no ladder epoch.
    pub mass_deficit: f64,
}

impl HeightDist {
    pub fn prob(&self, h: i64) -> f64 {
        self.heights.iter().find(|a| a.0 == h).map_or(0.0, |a| a.1)
    }

    pub fn mass(&self) -> f64 {
        self.heights.iter().map(|a| a.1).sum()
    }

    /// `E[S_tau; tau < inf]`.
    pub fn mean(&self) -> f64 {
        self.heights.iter().map(|&(h, p)| h as f64 * p).sum()
    }
}

/// Exit kernel of a half-line: `f_h(z) = P_z[first exit lands on h]`.
#[derive(Clone, Debug)]
pub struct ExitKernel {
    pub half_line: HalfLine,
    /// Exit sites, increasing.
    pub targets: Vec<i64>,
    reach: usize,
    dirichlet: bool,
    // values[k][i]: target k, domain site at distance i from the edge
    values: Vec<Vec<f64>>,
}

impl ExitKernel {
    /// Solves the exit problem on the `reach` sites nearest the edge.
    ///
    /// Beyond the truncation the kernel is continued by its last value when
    /// the walk drifts toward the edge or is centered, and by zero when it
    /// drifts away.
    pub fn solve(dist: &LatticeDist, half_line: HalfLine, reach: usize) -> Result<Self, LadderError> {
        let reach = reach.max(4);
        let (jlo, jhi) = (dist.min_support(), dist.max_support());
        let mean = dist.mean();
        let dirichlet = match half_line.side {
            Side::FromNegative => mean < -ZERO_DRIFT,
            Side::FromPositive => mean > ZERO_DRIFT,
        };
        let (alo, ahi) = half_line.arrivals(jlo, jhi);
        let targets: Vec<i64> = (alo..=ahi).collect();
        // site index i = distance from the edge; z = edge -+ i
        let sign: i64 = match half_line.side {
            Side::FromNegative => -1,
            Side::FromPositive => 1,
        };
        let site = |i: usize| half_line.edge + sign * i as i64;
        let band = jlo.unsigned_abs().max(jhi.unsigned_abs()) as usize;
        let mut m = BandedMatrix::zeros(reach, band, band);
        for i in 0..reach {
            m.add(i, i, 1.0);
            let z = site(i);
            for &(j, p) in dist.atoms() {
                let w = z + j;
                if !half_line.contains(w) {
                    continue;
                }
                let k = ((w - half_line.edge) * sign) as usize;
                if k < reach {
                    m.add(i, k, -p);
                } else if !dirichlet {
                    m.add(i, reach - 1, -p);
                }
            }
        }
        let lu = m.factor().ok_or(LadderError::Singular)?;
        let values = targets
            .iter()
            .map(|&h| {
                let rhs: Vec<f64> = (0..reach).map(|i| dist.prob(h - site(i))).collect();
                lu.solve(&rhs)
            })
            .collect();
        Ok(ExitKernel { half_line, targets, reach, dirichlet, values })
    }

    /// `f_h(z)`; zero outside the domain's exit set.
    pub fn get(&self, z: i64, h: i64) -> f64 {
        let Some(k) = self.targets.iter().position(|&t| t == h) else {
            return 0.0;
        };
        if !self.half_line.contains(z) {
            return 0.0;
        }
        let i = (z - self.half_line.edge).unsigned_abs() as usize;
        if i < self.reach {
            self.values[k][i]
        } else if self.dirichlet {
            0.0
        } else {
            self.values[k][self.reach - 1]
        }
    }

    /// `(h, f_h(z))` over the exit sites.
    pub fn row(&self, z: i64) -> Vec<(i64, f64)> {
        self.targets.iter().map(|&h| (h, self.get(z, h))).collect()
    }

    /// `P_z[the walk ever leaves the half-line]`.
    pub fn exit_probability(&self, z: i64) -> f64 {
        self.targets.iter().map(|&h| self.get(z, h)).sum()
    }
}

fn heights_from_row(variant: LadderVariant, row: Vec<(i64, f64)>) -> HeightDist {
    let mut heights: Vec<(i64, f64)> = row.into_iter().filter(|a| a.1 > 0.0).collect();
    heights.sort_by_key(|a| a.0);
    let mass: f64 = heights.iter().map(|a| a.1).sum();
    HeightDist { variant, heights, mass_deficit: (1.0 - mass).max(0.0) }
}

/// Infinite-horizon ladder height law from the exit kernel.
pub fn ladder_heights(dist: &LatticeDist, variant: LadderVariant) -> Result<HeightDist, LadderError> {
    ladder_heights_with(dist, variant, DEFAULT_REACH)
}

pub fn ladder_heights_with(
    dist: &LatticeDist,
    variant: LadderVariant,
    reach: usize,
) -> Result<HeightDist, LadderError> {
    let neg = |edge| HalfLine { side: Side::FromNegative, edge };
    let pos = |edge| HalfLine { side: Side::FromPositive, edge };
    match variant {
        LadderVariant::StrictAsc => {
            let k = ExitKernel::solve(dist, neg(0), reach)?;
            Ok(heights_from_row(variant, k.row(0)))
        }
        LadderVariant::StrictDesc => {
            let k = ExitKernel::solve(dist, pos(0), reach)?;
            Ok(heights_from_row(variant, k.row(0)))
        }
        LadderVariant::WeakAsc | LadderVariant::WeakDesc => {
            let hl = if variant == LadderVariant::WeakAsc { neg(-1) } else { pos(1) };
            let k = ExitKernel::solve(dist, hl, reach)?;
            let mut acc: Vec<(i64, f64)> = Vec::new();
            let mut push = |h: i64, p: f64| match acc.iter_mut().find(|a| a.0 == h) {
                Some(a) => a.1 += p,
                None => acc.push((h, p)),
            };
            for &(j, p) in dist.atoms() {
                if variant.stays(j) {
                    for (h, f) in k.row(j) {
                        push(h, p * f);
                    }
                } else {
                    push(j, p);
                }
            }
            Ok(heights_from_row(variant, acc))
        }
    }
}

/// Ladder epochs by dynamic programming up to a horizon.
#[derive(Clone, Debug)]
pub struct LadderEpochs<T> {
    pub variant: LadderVariant,
    /// `by_time[n]` holds `P[tau = n, S_n = .]`.
    pub by_time: Vec<Segment<T>>,
    /// `P[tau > n]`.
    pub survival: Vec<T>,
    /// `P[tau > n, S_n = .]`.
    pub profile: Vec<Segment<T>>,
}

/// Ladder epoch law on `n <= N`, exact in rational arithmetic. The window is
/// the full reachable range, so nothing is truncated.
pub fn ladder_epochs<T: Scalar>(dist: &LatticeDist, variant: LadderVariant, horizon: usize) -> Option<LadderEpochs<T>> {
    let law = T::law(dist)?;
    let n = horizon as i64;
    let (lo, hi) = (law.min_jump().min(0) * n - 1, law.max_jump().max(0) * n + 1);
    let width = (hi - lo + 1) as usize;
    let mut cur = vec![T::zero(); width];
    cur[(-lo) as usize] = T::one();
    let (mut first, mut last) = ((-lo) as usize, (-lo) as usize);
    let mut by_time = vec![Segment::empty()];
    let mut survival = vec![T::one()];
    let mut profile = vec![Segment { start: 0, values: vec![T::one()] }];
    for _ in 0..horizon {
        let mut next = vec![T::zero(); width];
        let mut hits: Vec<(i64, T)> = Vec::new();
        let (mut nf, mut nl) = (usize::MAX, 0usize);
        for i in first..=last {
            if cur[i].is_zero() {
                continue;
            }
            let z = lo + i as i64;
            for (k, p) in law.probs.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let w = z + law.offset + k as i64;
                let m = cur[i].clone() * p.clone();
                if variant.stays(w) {
                    let j = (w - lo) as usize;
                    next[j] = next[j].clone() + m;
                    nf = nf.min(j);
                    nl = nl.max(j);
                } else {
                    match hits.iter_mut().find(|a| a.0 == w) {
                        Some(a) => a.1 = a.1.clone() + m,
                        None => hits.push((w, m)),
                    }
                }
            }
        }
        hits.sort_by_key(|a| a.0);
        let seg = match (hits.first(), hits.last()) {
            (Some(a), Some(b)) => {
                let mut values = vec![T::zero(); (b.0 - a.0 + 1) as usize];
                for (h, m) in &hits {
                    values[(h - a.0) as usize] = m.clone();
                }
                Segment { start: a.0, values }
            }
            _ => Segment::empty(),
        };
        by_time.push(seg);
        cur = next;
        if nf == usize::MAX {
            survival.push(T::zero());
            profile.push(Segment::empty());
            first = 0;
            last = 0;
            continue;
        }
        first = nf;
        last = nl;
        let vals = cur[first..=last].to_vec();
        survival.push(vals.iter().cloned().fold(T::zero(), |a, b| a + b));
        profile.push(Segment { start: lo + first as i64, values: vals });
    }
    Some(LadderEpochs { variant, by_time, survival, profile })
}

/// Ladder height law accumulated over `n <= N` by dynamic programming, with
/// `mass_deficit = P[tau > N]`.
pub fn ladder_height_dist(dist: &LatticeDist, variant: LadderVariant, horizon: usize) -> HeightDist {
    let ep = ladder_epochs::<f64>(dist, variant, horizon).expect("float law");
    let mut acc: Vec<(i64, f64)> = Vec::new();
    for seg in &ep.by_time {
        for (h, p) in seg.iter() {
            match acc.iter_mut().find(|a| a.0 == h) {
                Some(a) => a.1 += *p,
                None => acc.push((h, *p)),
            }
        }
    }
    acc.sort_by_key(|a| a.0);
    acc.retain(|a| a.1 > 0.0);
    HeightDist { variant, heights: acc, mass_deficit: *ep.survival.last().unwrap() }
}

/// Renewal measure and renewal function of a ladder height law, indexed by
/// the absolute height.
#[derive(Clone, Debug, Serialize)]
pub struct Renewal {
    pub variant: LadderVariant,
    /// `U(k)`: expected number of ladder heights equal to `+-k`.
    pub potential_u: Vec<f64>,
    /// `V(x) = U[0, x)` in absolute height, `x = 0..=x_max`.
    pub renewal_v: Vec<f64>,
}

impl Renewal {
    /// `U(k)` with `U = 0` beyond the table.
    pub fn u(&self, k: i64) -> f64 {
        if k < 0 {
            return 0.0;
        }
        self.potential_u.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn v(&self, x: i64) -> f64 {
        if x <= 0 {
            return 0.0;
        }
        self.renewal_v[(x as usize).min(self.renewal_v.len() - 1)]
    }
}

/// `U` and `V` up to `x_max`. Fails when the height law lost more than `tol`
/// to truncation; a genuinely defective law (drift away) should be passed
/// with `tol = 1`.
pub fn renewal_function(h: &HeightDist, x_max: usize, tol: f64) -> Result<Renewal, LadderError> {
    if h.mass_deficit > tol {
        return Err(LadderError::DeficitTooLarge { deficit: h.mass_deficit, tol });
    }
    let p0 = h.prob(0);
    if p0 >= 1.0 {
        return Err(LadderError::DegenerateHeights);
    }
    let steps: Vec<(usize, f64)> =
        h.heights.iter().filter(|a| a.0 != 0).map(|&(k, p)| (k.unsigned_abs() as usize, p)).collect();
    let mut u = vec![0.0; x_max + 1];
    for k in 0..=x_max {
        let mut s = if k == 0 { 1.0 } else { 0.0 };
        for &(d, p) in &steps {
            if d <= k {
                s += p * u[k - d];
            }
        }
        u[k] = s / (1.0 - p0);
    }
    let mut v = vec![0.0; x_max + 1];
    for x in 1..=x_max {
        v[x] = v[x - 1] + u[x - 1];
    }
    Ok(Renewal { variant: h.variant, potential_u: u, renewal_v: v })
}

/// Height law plus renewal tables of one ladder variant.
#[derive(Clone, Debug, Serialize)]
pub struct LadderData {
    pub variant: LadderVariant,
    pub height_dist: HeightDist,
    pub renewal: Renewal,
}

/// Infinite-horizon ladder data with renewal tables up to `x_max`.
pub fn ladder_data(dist: &LatticeDist, variant: LadderVariant, x_max: usize) -> Result<LadderData, LadderError> {
    let height_dist = ladder_heights(dist, variant)?;
    let renewal = renewal_function(&height_dist, x_max, 1.0)?;
    Ok(LadderData { variant, height_dist, renewal })
}

/// Green function of the walk killed on entering `[edge + 1, inf)`:
/// expected visits to `y` from `x` before the first entry.
#[derive(Clone, Debug)]
pub struct HalfLineGreen {
    pub edge: i64,
    u_plus: Renewal,
    u_minus: Renewal,
}

impl HalfLineGreen {
    /// Tables cover `|x|, |y| <= range` from the edge.
    pub fn new(dist: &LatticeDist, edge: i64, range: usize) -> Result<Self, LadderError> {
        let up = ladder_heights(dist, LadderVariant::StrictAsc)?;
        let down = ladder_heights(dist, LadderVariant::WeakDesc)?;
        Ok(HalfLineGreen {
            edge,
            u_plus: renewal_function(&up, range + 1, 1.0)?,
            u_minus: renewal_function(&down, range + 1, 1.0)?,
        })
    }

    /// Splits each path at the first time it reaches its maximum `m`.
    pub fn g(&self, x: i64, y: i64) -> f64 {
        let (x, y) = (x - self.edge - 1, y - self.edge - 1);
        if x > -1 || y > -1 {
            return 0.0;
        }
        (x.max(y)..=-1).map(|m| self.u_plus.u(m - x) * self.u_minus.u(m - y)).sum()
    }

    /// `lim_{y -> -inf} G(x, y) = V_{*+}(|x|) / |E[S_{tau-}]|` (0 if the weak
    /// descending heights are defective).
    pub fn g_at_minus_infinity(&self, x: i64, desc_mean: f64, defective: bool) -> f64 {
        if defective {
            return 0.0;
        }
        let x = x - self.edge - 1;
        if x > -1 {
            return 0.0;
        }
        self.u_plus.v(-x) / desc_mean.abs()
    }
}

/// The three expressions of the fluctuation constant of a centered law.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FluctuationConstants {
    pub c_direct: f64,
    pub c_spitzer: f64,
    pub c_ladder: f64,
}

fn require_centered(dist: &LatticeDist) -> Result<(), LadderError> {
    if dist.mean().abs() > ZERO_DRIFT {
        Err(LadderError::NotCentered(dist.mean()))
    } else {
        Ok(())
    }
}

/// `(1 / (sigma sqrt(2 pi))) sum_{w >= 1} V_-(w) mu[w, inf)` with weak descent.
pub fn c_direct(dist: &LatticeDist) -> Result<f64, LadderError> {
    require_centered(dist)?;
    let m = dist.max_support().max(1) as usize;
    let down = ladder_heights(dist, LadderVariant::WeakDesc)?;
    let r = renewal_function(&down, m + 1, 1e-9)?;
    let s: f64 = (1..=m as i64).map(|w| r.v(w) * dist.tail_ge(w)).sum();
    Ok(s / (dist.sigma() * (2.0 * PI).sqrt()))
}

/// `sigma / (2 sqrt(2 pi) |E[S_{tau-}]|)` with weak descent.
pub fn c_ladder(dist: &LatticeDist) -> Result<f64, LadderError> {
    require_centered(dist)?;
    let down = ladder_heights(dist, LadderVariant::WeakDesc)?;
    if down.mass_deficit > 1e-9 {
        return Err(LadderError::DeficitTooLarge { deficit: down.mass_deficit, tol: 1e-9 });
    }
    Ok(dist.sigma() / (2.0 * (2.0 * PI).sqrt() * down.mean().abs()))
}

/// `(1/2)(1/sqrt(pi)) exp(sum_n (P[S_n <= 0] - 1/2) / n)`, the series summed
/// to `horizon` and its tail removed by Richardson extrapolation in
/// `N^{-1/2}` and `N^{-1}`.
pub fn c_spitzer(dist: &LatticeDist, horizon: usize) -> Result<f64, LadderError> {
    require_centered(dist)?;
    let horizon = horizon.max(64) / 4 * 4;
    let cdf = nonpositive_probabilities(dist, horizon);
    let mut partial = vec![0.0; horizon + 1];
    for n in 1..=horizon {
        partial[n] = partial[n - 1] + (cdf[n] - 0.5) / n as f64;
    }
    let ns = [horizon / 4, horizon / 2, horizon];
    let rows: Vec<[f64; 4]> = ns
        .iter()
        .map(|&n| {
            let x = n as f64;
            [1.0, x.powf(-0.5), 1.0 / x, partial[n]]
        })
        .collect();
    let s = solve3(&rows);
    Ok(0.5 / PI.sqrt() * s.exp())
}

/// `P[S_n <= 0]` for `n = 0..=N` by forward dynamic programming on the full
/// reachable range, entries below 1e-300 dropped.
pub fn nonpositive_probabilities(dist: &LatticeDist, horizon: usize) -> Vec<f64> {
    let (off, probs) = dist.dense();
    let n = horizon as i64;
    let lo = off.min(0) * n - 1;
    let hi = (off + probs.len() as i64 - 1).max(0) * n + 1;
    let width = (hi - lo + 1) as usize;
    let mut cur = vec![0.0; width];
    let mut next = vec![0.0; width];
    let zero = (-lo) as usize;
    cur[zero] = 1.0;
    let (mut first, mut last) = (zero, zero);
    let mut out = vec![1.0];
    for _ in 0..horizon {
        let nf = (first as i64 + off).max(0) as usize;
        let nl = ((last as i64 + off + probs.len() as i64 - 1) as usize).min(width - 1);
        for v in &mut next[nf..=nl] {
            *v = 0.0;
        }
        for i in first..=last {
            let s = cur[i];
            if s == 0.0 {
                continue;
            }
            let base = (i as i64 + off) as usize;
            for (k, p) in probs.iter().enumerate() {
                next[base + k] += s * p;
            }
        }
        for v in &mut cur[first..=last] {
            *v = 0.0;
        }
        std::mem::swap(&mut cur, &mut next);
        first = nf;
        last = nl;
        while first < last && cur[first] < 1e-300 {
            cur[first] = 0.0;
            first += 1;
        }
        while last > first && cur[last] < 1e-300 {
            cur[last] = 0.0;
            last -= 1;
        }
        let upto = zero.min(last);
        let s: f64 = if first <= upto { cur[first..=upto].iter().sum() } else { 0.0 };
        out.push(s);
    }
    out
}

// Solves a 3x3 system given as augmented rows; returns the first unknown.
fn solve3(rows: &[[f64; 4]]) -> f64 {
    let mut a = [rows[0], rows[1], rows[2]];
    for k in 0..3 {
        let p = (k..3).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap()).unwrap();
        a.swap(k, p);
        for i in k + 1..3 {
            let f = a[i][k] / a[k][k];
            for j in k..4 {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let mut s = a[i][3];
        for j in i + 1..3 {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    x[0]
}

/// All three constants; `horizon` drives the Spitzer series.
pub fn fluctuation_constants(dist: &LatticeDist, horizon: usize) -> Result<FluctuationConstants, LadderError> {
    Ok(FluctuationConstants {
        c_direct: c_direct(dist)?,
        c_spitzer: c_spitzer(dist, horizon)?,
        c_ladder: c_ladder(dist)?,
    })
}
