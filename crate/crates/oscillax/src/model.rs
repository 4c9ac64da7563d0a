//! Jump laws, the oscillating model, hypothesis checks and Laplace analysis.

use std::fmt;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{bisect, convergents, rat_to_f64, rpow, BISECTION_TOL};

/// Means with absolute value below this threshold count as zero drift.
pub const ZERO_DRIFT: f64 = 1e-12;
/// Largest admissible `|t v|` in a Laplace transform evaluation.
pub const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("empty distribution")]
    Empty,
    #[error("probability {0} is negative or not finite")]
    BadProbability(f64),
    #[error("duplicate atom at {0}")]
    DuplicateAtom(i64),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("cannot parse probability {0:?}")]
    BadRational(String),
    #[error("{0} law is not strongly aperiodic")]
    NotAperiodic(&'static str),
    #[error("{0} law has support on one side only")]
    SupportOneSided(&'static str),
    #[error("hypothesis O3 fails: D*D' = {0} > -2")]
    O3Violated(i64),
    #[error("hypothesis O4 fails: origin law must charge both strict half-lines")]
    O4Violated,
    #[error("exponent overflow: |t*v| = {0} exceeds 700")]
    Overflow(f64),
    #[error("argmin interval is degenerate (lambda = lambda')")]
    DegenerateInterval,
    #[error("the two Laplace transforms coincide")]
    IdenticalTransforms,
    #[error("invalid model file: {0}")]
    Json(String),
}

/// Finitely supported probability law on the integers.
#[derive(Clone, Debug)]
pub struct LatticeDist {
    atoms: Vec<(i64, f64)>,
    exact: Option<Vec<BigRational>>,
    mean: f64,
    variance: f64,
}

impl PartialEq for LatticeDist {
    fn eq(&self, other: &Self) -> bool {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => self.values().eq(other.values()) && a == b,
            _ => self.atoms == other.atoms,
        }
    }
}

impl LatticeDist {
    /// Builds a law from `(value, probability)` pairs in any order.
    /// Zero probabilities are dropped; the total must be 1 within 1e-14.
    pub fn new(atoms: &[(i64, f64)]) -> Result<Self, ModelError> {
        let mut v: Vec<(i64, f64)> = Vec::with_capacity(atoms.len());
        for &(x, p) in atoms {
            if !p.is_finite() || p < 0.0 {
                return Err(ModelError::BadProbability(p));
            }
            if p > 0.0 {
                v.push((x, p));
            }
        }
        v.sort_by_key(|a| a.0);
        for w in v.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::DuplicateAtom(w[0].0));
            }
        }
        if v.is_empty() {
            return Err(ModelError::Empty);
        }
        let total: f64 = v.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-14 {
            return Err(ModelError::NotNormalized(total));
        }
        Ok(Self::finish(v, None))
    }

    /// Builds a law with exact rational probabilities summing exactly to 1.
    pub fn from_rationals(atoms: &[(i64, BigRational)]) -> Result<Self, ModelError> {
        let mut v: Vec<(i64, BigRational)> = Vec::new();
        for (x, p) in atoms {
            if p.is_negative() {
                return Err(ModelError::BadProbability(rat_to_f64(p)));
            }
            if !p.is_zero() {
                v.push((*x, p.clone()));
            }
        }
        v.sort_by_key(|a| a.0);
        for w in v.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::DuplicateAtom(w[0].0));
            }
        }
        if v.is_empty() {
            return Err(ModelError::Empty);
        }
        let total: BigRational = v.iter().map(|a| a.1.clone()).sum();
        if !total.is_one() {
            return Err(ModelError::NotNormalized(rat_to_f64(&total)));
        }
        let floats = v.iter().map(|(x, p)| (*x, rat_to_f64(p))).collect();
        let exact = v.into_iter().map(|a| a.1).collect();
        Ok(Self::finish(floats, Some(exact)))
    }

    /// Uniform law on the given distinct values.
    pub fn uniform(values: &[i64]) -> Result<Self, ModelError> {
        let k = values.len() as i64;
        let atoms: Vec<(i64, BigRational)> =
            values.iter().map(|&x| (x, BigRational::new(1.into(), k.into()))).collect();
        Self::from_rationals(&atoms)
    }

    /// Law given by small integer fractions `(value, num, den)`.
    pub fn from_fractions(atoms: &[(i64, i64, i64)]) -> Result<Self, ModelError> {
        let v: Vec<(i64, BigRational)> =
            atoms.iter().map(|&(x, n, d)| (x, BigRational::new(n.into(), d.into()))).collect();
        Self::from_rationals(&v)
    }

    fn finish(atoms: Vec<(i64, f64)>, exact: Option<Vec<BigRational>>) -> Self {
        let (mean, variance) = match &exact {
            Some(ps) => {
                let mut m = BigRational::zero();
                let mut s = BigRational::zero();
                for ((x, _), p) in atoms.iter().zip(ps) {
                    let xr = BigRational::from_integer((*x).into());
                    m += p * &xr;
                    s += p * &xr * &xr;
                }
                let var = &s - &m * &m;
                (rat_to_f64(&m), rat_to_f64(&var))
            }
            None => {
                let m: f64 = atoms.iter().map(|(x, p)| *x as f64 * p).sum();
                let s: f64 = atoms.iter().map(|(x, p)| (*x as f64).powi(2) * p).sum();
                (m, (s - m * m).max(0.0))
            }
        };
        LatticeDist { atoms, exact, mean, variance }
    }

    pub fn atoms(&self) -> &[(i64, f64)] {
        &self.atoms
    }

    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        self.atoms.iter().map(|a| a.0)
    }

    /// Exact atoms when the law was built from rationals.
    pub fn exact_atoms(&self) -> Option<Vec<(i64, BigRational)>> {
        self.exact.as_ref().map(|ps| self.atoms.iter().map(|a| a.0).zip(ps.iter().cloned()).collect())
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn min_support(&self) -> i64 {
        self.atoms[0].0
    }

    pub fn max_support(&self) -> i64 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// Largest jump in absolute value.
    pub fn max_jump(&self) -> i64 {
        self.min_support().abs().max(self.max_support().abs())
    }

    pub fn prob(&self, v: i64) -> f64 {
        match self.atoms.binary_search_by_key(&v, |a| a.0) {
            Ok(i) => self.atoms[i].1,
            Err(_) => 0.0,
        }
    }

    /// `mu[w, +inf)`.
    pub fn tail_ge(&self, w: i64) -> f64 {
        self.atoms.iter().filter(|a| a.0 >= w).map(|a| a.1).sum()
    }

    /// `mu(-inf, w]`.
    pub fn tail_le(&self, w: i64) -> f64 {
        self.atoms.iter().filter(|a| a.0 <= w).map(|a| a.1).sum()
    }

    /// Image under `x -> -x`.
    pub fn mirror(&self) -> LatticeDist {
        let mut atoms: Vec<(i64, f64)> = self.atoms.iter().map(|&(x, p)| (-x, p)).collect();
        atoms.reverse();
        let exact = self.exact.as_ref().map(|e| e.iter().rev().cloned().collect());
        Self::finish(atoms, exact)
    }

    /// Drift sign with the zero threshold [`ZERO_DRIFT`].
    pub fn drift(&self) -> Drift {
        if self.mean > ZERO_DRIFT {
            Drift::P
        } else if self.mean < -ZERO_DRIFT {
            Drift::N
        } else {
            Drift::Z
        }
    }

    pub fn is_two_sided(&self) -> bool {
        self.min_support() < 0 && self.max_support() > 0
    }

    /// gcd of the pairwise support differences equals 1.
    pub fn is_strongly_aperiodic(&self) -> bool {
        if self.atoms.len() < 2 {
            return false;
        }
        let base = self.atoms[0].0;
        let g = self.atoms.iter().skip(1).fold(0i64, |g, a| g.gcd(&(a.0 - base)));
        g == 1
    }

    /// Same atoms (bitwise for floats, exactly for rationals).
    pub fn same_law(&self, other: &LatticeDist) -> bool {
        self == other
    }

    /// Dense probability vector starting at `min_support`.
    pub fn dense(&self) -> (i64, Vec<f64>) {
        let lo = self.min_support();
        let mut v = vec![0.0; (self.max_support() - lo + 1) as usize];
        for &(x, p) in &self.atoms {
            v[(x - lo) as usize] = p;
        }
        (lo, v)
    }

    /// Dense exact probability vector starting at `min_support`.
    pub fn dense_exact(&self) -> Option<(i64, Vec<BigRational>)> {
        let exact = self.exact.as_ref()?;
        let lo = self.min_support();
        let mut v = vec![BigRational::zero(); (self.max_support() - lo + 1) as usize];
        for ((x, _), p) in self.atoms.iter().zip(exact) {
            v[(x - lo) as usize] = p.clone();
        }
        Some((lo, v))
    }
}

impl fmt::Display for LatticeDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (x, p)) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match &self.exact {
                Some(e) => write!(f, "{x}: {}", e[i])?,
                None => write!(f, "{x}: {p}")?,
            }
        }
        write!(f, "}}")
    }
}

/// Sign of a drift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Drift {
    P,
    Z,
    N,
}

impl Drift {
    pub fn flip(self) -> Drift {
        match self {
            Drift::P => Drift::N,
            Drift::Z => Drift::Z,
            Drift::N => Drift::P,
        }
    }

    fn letter(self) -> char {
        match self {
            Drift::P => 'P',
            Drift::Z => 'Z',
            Drift::N => 'N',
        }
    }
}

/// Pair of drift signs (left medium, right medium).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DriftCase(pub Drift, pub Drift);

impl DriftCase {
    /// Case label under `x -> -x` with the two media swapped.
    pub fn mirror(self) -> DriftCase {
        DriftCase(self.1.flip(), self.0.flip())
    }

    /// Recurrent cases, where the rate is 1.
    pub fn is_rate_one(self) -> bool {
        matches!(
            self,
            DriftCase(Drift::P, Drift::N)
                | DriftCase(Drift::Z, Drift::Z)
                | DriftCase(Drift::P, Drift::Z)
                | DriftCase(Drift::Z, Drift::P)
        )
    }

    pub fn parse(s: &str) -> Option<DriftCase> {
        let t: Vec<char> = s.chars().filter(|c| c.is_ascii_alphabetic()).collect();
        let d = |c: char| match c {
            'P' => Some(Drift::P),
            'Z' => Some(Drift::Z),
            'N' => Some(Drift::N),
            _ => None,
        };
        if t.len() != 2 {
            return None;
        }
        Some(DriftCase(d(t[0])?, d(t[1])?))
    }
}

impl fmt::Display for DriftCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0.letter(), self.1.letter())
    }
}

impl Serialize for DriftCase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Which law moves the walk from the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Convention {
    /// Three media: `mu` below 0, `mu0` at 0, `mu'` above 0.
    ThreeMedia,
    /// Two media: the origin uses the left law and belongs to the left medium.
    TwoMedia,
}

/// Which checks to run in [`validate_model_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checks {
    pub o3: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Checks { o3: true }
    }
}

/// The triple `(mu, mu0, mu')` with its validated structure.
#[derive(Clone, Debug)]
pub struct OscillatingModel {
    pub left: LatticeDist,
    pub origin: LatticeDist,
    pub right: LatticeDist,
    /// `sup{x >= 1 : mu(x) > 0}`.
    pub d: i64,
    /// `inf{x <= -1 : mu'(x) > 0}`.
    pub d_prime: i64,
    pub d0_plus: i64,
    pub d0_minus: i64,
    pub convention: Convention,
    pub drift_case: DriftCase,
    o3_waived: bool,
}

/// Validates O2 (strong aperiodicity), O3 (`D D' <= -2`) and O4.
pub fn validate_model(
    left: LatticeDist,
    origin: LatticeDist,
    right: LatticeDist,
) -> Result<OscillatingModel, ModelError> {
    validate_model_with(left, origin, right, Checks::default())
}

/// As [`validate_model`], optionally waiving O3. Only tests use the waiver, to
/// reach the nearest-neighbour toy model.
pub fn validate_model_with(
    left: LatticeDist,
    origin: LatticeDist,
    right: LatticeDist,
    checks: Checks,
) -> Result<OscillatingModel, ModelError> {
    if left.max_support() < 1 || left.min_support() > -1 {
        return Err(ModelError::SupportOneSided("left"));
    }
    if right.max_support() < 1 || right.min_support() > -1 {
        return Err(ModelError::SupportOneSided("right"));
    }
    if !left.is_strongly_aperiodic() {
        return Err(ModelError::NotAperiodic("left"));
    }
    if !right.is_strongly_aperiodic() {
        return Err(ModelError::NotAperiodic("right"));
    }
    let d = left.max_support();
    let d_prime = right.min_support();
    if checks.o3 && d * d_prime > -2 {
        return Err(ModelError::O3Violated(d * d_prime));
    }
    if !(origin.min_support() < 0 && origin.max_support() > 0) {
        return Err(ModelError::O4Violated);
    }
    let convention = if origin.same_law(&left) { Convention::TwoMedia } else { Convention::ThreeMedia };
    Ok(OscillatingModel {
        d0_plus: origin.max_support(),
        d0_minus: origin.min_support(),
        drift_case: DriftCase(left.drift(), right.drift()),
        left,
        origin,
        right,
        d,
        d_prime,
        convention,
        o3_waived: !checks.o3,
    })
}

impl OscillatingModel {
    /// Two-media model: the origin moves with the left law.
    pub fn two_media(left: LatticeDist, right: LatticeDist) -> Result<Self, ModelError> {
        validate_model(left.clone(), left, right)
    }

    pub fn o3_waived(&self) -> bool {
        self.o3_waived
    }

    /// Image under `x -> -x`: the left law becomes the mirrored right law.
    pub fn mirror(&self) -> OscillatingModel {
        let checks = Checks { o3: !self.o3_waived };
        validate_model_with(self.right.mirror(), self.origin.mirror(), self.left.mirror(), checks)
            .expect("mirror of a valid model is valid")
    }

    /// Largest jump of the three laws.
    pub fn max_jump(&self) -> i64 {
        self.left.max_jump().max(self.origin.max_jump()).max(self.right.max_jump())
    }

    /// Law used from site `x`.
    pub fn law_at(&self, x: i64) -> &LatticeDist {
        if x < 0 {
            &self.left
        } else if x == 0 {
            &self.origin
        } else {
            &self.right
        }
    }

    /// Medium label of a site: -1, 0 or 1 (two media merge the origin with
    /// the left half-line).
    pub fn medium(&self, x: i64) -> i8 {
        match self.convention {
            Convention::ThreeMedia => x.signum() as i8,
            Convention::TwoMedia => {
                if x <= 0 {
                    -1
                } else {
                    1
                }
            }
        }
    }

    /// Essential class `(D', D) ∪ supp(mu0)` of the switching chain.
    pub fn essential_class(&self) -> Vec<i64> {
        let mut s: Vec<i64> = (self.d_prime + 1..self.d).collect();
        s.extend(self.origin.values());
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Sites reachable at a switching time: the arrival set of `Q`.
    pub fn arrival_set(&self) -> Vec<i64> {
        let mut s: Vec<i64> = match self.convention {
            Convention::ThreeMedia => {
                let mut v: Vec<i64> = (0..self.d).collect();
                v.extend(self.d_prime + 1..=0);
                v.extend(self.origin.values().filter(|&y| y != 0));
                v
            }
            Convention::TwoMedia => (self.d_prime + 1..=self.d).collect(),
        };
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Laplace profile of both laws.
    pub fn laplace_profile(&self) -> Result<LaplaceProfile, ModelError> {
        let (lambda, rho) = argmin_laplace(&self.left)?;
        let (lambda_prime, rho_prime) = argmin_laplace(&self.right)?;
        let crossing = match cross_point(&self.left, &self.right) {
            Ok(Crossing::At { lambda_star, rho_star }) => Some((lambda_star, rho_star)),
            _ => None,
        };
        Ok(LaplaceProfile { lambda, rho, lambda_prime, rho_prime, crossing })
    }
}

/// `lambda`, `rho` of both laws and the optional crossing point.
#[derive(Clone, Debug, Serialize)]
pub struct LaplaceProfile {
    pub lambda: f64,
    pub rho: f64,
    pub lambda_prime: f64,
    pub rho_prime: f64,
    pub crossing: Option<(f64, f64)>,
}

fn guard(dist: &LatticeDist, t: f64) -> Result<(), ModelError> {
    let worst = t.abs() * dist.max_jump() as f64;
    if worst > EXP_GUARD {
        Err(ModelError::Overflow(worst))
    } else {
        Ok(())
    }
}

/// `L(t) = sum p_i e^{t v_i}`.
pub fn laplace(dist: &LatticeDist, t: f64) -> Result<f64, ModelError> {
    guard(dist, t)?;
    Ok(dist.atoms.iter().map(|&(v, p)| p * (t * v as f64).exp()).sum())
}

/// `dL/dt(t) = sum p_i v_i e^{t v_i}`.
pub fn laplace_deriv(dist: &LatticeDist, t: f64) -> Result<f64, ModelError> {
    guard(dist, t)?;
    Ok(dist.atoms.iter().map(|&(v, p)| p * v as f64 * (t * v as f64).exp()).sum())
}

fn laplace_unchecked(dist: &LatticeDist, t: f64) -> f64 {
    dist.atoms.iter().map(|&(v, p)| p * (t * v as f64).exp()).sum()
}

fn deriv_unchecked(dist: &LatticeDist, t: f64) -> f64 {
    dist.atoms.iter().map(|&(v, p)| p * v as f64 * (t * v as f64).exp()).sum()
}

/// Minimiser `lambda` of `L` and `rho = L(lambda)`.
pub fn argmin_laplace(dist: &LatticeDist) -> Result<(f64, f64), ModelError> {
    if !dist.is_two_sided() {
        return Err(ModelError::SupportOneSided("argmin"));
    }
    if dist.mean().abs() <= ZERO_DRIFT {
        return Ok((0.0, 1.0));
    }
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while deriv_unchecked(dist, lo) > 0.0 {
        lo *= 2.0;
        guard(dist, lo)?;
    }
    while deriv_unchecked(dist, hi) < 0.0 {
        hi *= 2.0;
        guard(dist, hi)?;
    }
    let lambda = bisect(|t| deriv_unchecked(dist, t), lo, hi, BISECTION_TOL);
    Ok((lambda, laplace_unchecked(dist, lambda)))
}

/// Exponentially tilted law `p_i e^{t v_i} / L(t)`.
pub fn tilt(dist: &LatticeDist, t: f64) -> Result<LatticeDist, ModelError> {
    let l = laplace(dist, t)?;
    let mut atoms: Vec<(i64, f64)> = dist.atoms.iter().map(|&(v, p)| (v, p * (t * v as f64).exp() / l)).collect();
    // renormalise against rounding so the result is a valid law
    let s: f64 = atoms.iter().map(|a| a.1).sum();
    for a in &mut atoms {
        a.1 /= s;
    }
    Ok(LatticeDist::finish(atoms, None))
}

/// Tilt with a rational base `u = e^t`, exact when the law is exact.
pub fn tilt_exact(dist: &LatticeDist, u: &BigRational) -> Option<LatticeDist> {
    let atoms = dist.exact_atoms()?;
    let l = laplace_exact(dist, u)?;
    let v: Vec<(i64, BigRational)> = atoms.into_iter().map(|(x, p)| (x, p * rpow(u, x) / &l)).collect();
    LatticeDist::from_rationals(&v).ok()
}

/// `L` at `t = ln u` for rational `u`, exactly.
pub fn laplace_exact(dist: &LatticeDist, u: &BigRational) -> Option<BigRational> {
    let atoms = dist.exact_atoms()?;
    Some(atoms.iter().map(|(x, p)| p * rpow(u, *x)).sum())
}

/// `u * dL/du` at `u = e^t`, exactly.
pub fn laplace_deriv_exact(dist: &LatticeDist, u: &BigRational) -> Option<BigRational> {
    let atoms = dist.exact_atoms()?;
    Some(atoms.iter().map(|(x, p)| p * BigRational::from_integer((*x).into()) * rpow(u, *x)).sum())
}

/// `e^lambda` as an exact rational when it is one with denominator at most 10^6.
pub fn exact_argmin_base(dist: &LatticeDist) -> Option<BigRational> {
    dist.exact_atoms()?;
    let zero = BigRational::zero();
    let one = BigRational::one();
    if laplace_deriv_exact(dist, &one)? == zero {
        return Some(one);
    }
    let (lambda, _) = argmin_laplace(dist).ok()?;
    for (n, d) in convergents(lambda.exp(), 1_000_000) {
        if n <= 0 {
            continue;
        }
        let u = BigRational::new(n.into(), d.into());
        if laplace_deriv_exact(dist, &u)? == zero {
            return Some(u);
        }
    }
    None
}

/// Result of [`cross_point`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Crossing {
    At { lambda_star: f64, rho_star: f64 },
    NoCrossing,
}

/// Solution of `L(t) = L'(t)` between the two minimisers.
pub fn cross_point(left: &LatticeDist, right: &LatticeDist) -> Result<Crossing, ModelError> {
    if left.same_law(right) {
        return Err(ModelError::IdenticalTransforms);
    }
    let (l1, _) = argmin_laplace(left)?;
    let (l2, _) = argmin_laplace(right)?;
    let identical = (-16..=16).all(|k| {
        let t = k as f64 / 8.0;
        (laplace_unchecked(left, t) - laplace_unchecked(right, t)).abs() <= 1e-15
    });
    if identical {
        return Err(ModelError::IdenticalTransforms);
    }
    if (l1 - l2).abs() <= 1e-10 {
        return Err(ModelError::DegenerateInterval);
    }
    let (a, b) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
    let f = |t: f64| laplace_unchecked(left, t) - laplace_unchecked(right, t);
    let (fa, fb) = (f(a), f(b));
    let root = if fa == 0.0 {
        a
    } else if fb == 0.0 {
        b
    } else if (fa > 0.0) == (fb > 0.0) {
        return Ok(Crossing::NoCrossing);
    } else {
        bisect(f, a, b, BISECTION_TOL)
    };
    Ok(Crossing::At { lambda_star: root, rho_star: laplace_unchecked(left, root) })
}

#[derive(Deserialize)]
struct ModelFile {
    left: Vec<(i64, serde_json::Value)>,
    origin: Option<Vec<(i64, serde_json::Value)>>,
    right: Vec<(i64, serde_json::Value)>,
    #[serde(default)]
    two_media: bool,
}

/// Parses `"p/q"`, an integer string or a decimal string as a rational.
pub fn parse_rational(s: &str) -> Result<BigRational, ModelError> {
    let bad = || ModelError::BadRational(s.to_string());
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: num_bigint::BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: num_bigint::BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((i, f)) = s.split_once('.') {
        let digits = format!("{i}{f}");
        let n: num_bigint::BigInt = digits.parse().map_err(|_| bad())?;
        let d = num_bigint::BigInt::from(10u32).pow(f.len() as u32);
        return Ok(BigRational::new(n, d));
    }
    let n: num_bigint::BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

fn parse_law(atoms: &[(i64, serde_json::Value)]) -> Result<LatticeDist, ModelError> {
    let all_strings = atoms.iter().all(|(_, p)| p.is_string() || p.is_i64() || p.is_u64());
    if all_strings {
        let mut v = Vec::new();
        for (x, p) in atoms {
            let r = match p {
                serde_json::Value::String(s) => parse_rational(s)?,
                other => BigRational::from_integer(other.as_i64().unwrap_or(0).into()),
            };
            v.push((*x, r));
        }
        LatticeDist::from_rationals(&v)
    } else {
        let mut v = Vec::new();
        for (x, p) in atoms {
            let f = match p {
                serde_json::Value::String(s) => rat_to_f64(&parse_rational(s)?),
                serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                _ => return Err(ModelError::Json(format!("probability for {x} is not a number"))),
            };
            v.push((*x, f));
        }
        LatticeDist::new(&v)
    }
}

/// Parses a model file: `left`, `origin`, `right` as lists of `[value, prob]`.
pub fn parse_model_json(text: &str) -> Result<OscillatingModel, ModelError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
    let left = parse_law(&file.left)?;
    let right = parse_law(&file.right)?;
    let origin = if file.two_media {
        left.clone()
    } else {
        match &file.origin {
            Some(o) => parse_law(o)?,
            None => return Err(ModelError::Json("missing `origin` (or set two_media)".into())),
        }
    };
    validate_model(left, origin, right)
}

fn law_json(dist: &LatticeDist) -> serde_json::Value {
    match dist.exact_atoms() {
        Some(atoms) => {
            serde_json::Value::Array(atoms.into_iter().map(|(x, p)| serde_json::json!([x, p.to_string()])).collect())
        }
        None => serde_json::Value::Array(dist.atoms().iter().map(|(x, p)| serde_json::json!([x, p])).collect()),
    }
}

/// Serialises a model in the file format read by [`parse_model_json`].
pub fn model_to_json(model: &OscillatingModel) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    obj.insert("left".into(), law_json(&model.left));
    obj.insert("origin".into(), law_json(&model.origin));
    obj.insert("right".into(), law_json(&model.right));
    if model.convention == Convention::TwoMedia {
        obj.insert("two_media".into(), serde_json::Value::Bool(true));
    }
    serde_json::Value::Object(obj)
}
