//! Regime classification: drift case, subcase, predicted rate and exponent,
//! tilt parameter, and the constant `C_y` in the null-recurrent cases.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use num_rational::BigRational;
use serde::Serialize;
use thiserror::Error;

use crate::evolve::Window;
use crate::ladder::{ladder_heights, HalfLineGreen, LadderError, LadderVariant};
use crate::model::{
    argmin_laplace, cross_point, exact_argmin_base, laplace, laplace_exact, tilt, validate_model_with, Checks,
    Convention, Crossing, Drift, DriftCase, LaplaceProfile, LatticeDist, ModelError, OscillatingModel,
};
use crate::switching::{default_aggregate, power_iterate, SpectralData, SwitchingError, WeightSpec};

/// Float comparisons closer than this are re-done in exact arithmetic.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("case {0} is analysed only under the two-media convention")]
    RequiresTwoMedia(DriftCase),
    #[error("comparison of {0} is within tolerance and cannot be settled exactly")]
    TieUnresolvable(&'static str),
    #[error("subcase needs a crossing point but none was found")]
    CrossingMissing,
    #[error("constant C_y is only predicted in the cases (Z,Z), (P,Z) and (Z,N), not {0}")]
    NoConstant(DriftCase),
    #[error("invariant measure of the switching chain is unavailable")]
    NoInvariantMeasure,
    #[error("lambda_X varies by {0:.3e} over the plateau band")]
    PlateauNotReached(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error(transparent)]
    Switching(#[from] SwitchingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Subcase {
    A1,
    A2,
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    C,
}

impl Subcase {
    pub const ALL: [Subcase; 10] = [
        Subcase::A1,
        Subcase::A2,
        Subcase::B1,
        Subcase::B2,
        Subcase::B3,
        Subcase::B4,
        Subcase::B5,
        Subcase::B6,
        Subcase::B7,
        Subcase::C,
    ];

    pub fn parse(s: &str) -> Option<Subcase> {
        Subcase::ALL.into_iter().find(|c| c.to_string().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Subcase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConstantKind {
    InvariantMeasure,
    CyFormula,
    CxyUnknown,
}

/// Which parameter the tilt uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TiltChoice {
    None,
    Lambda,
    LambdaPrime,
    LambdaStar,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimePrediction {
    pub drift_case: DriftCase,
    pub subcase: Option<Subcase>,
    /// Row 1..=7 of the case C table.
    pub c_variant: Option<u8>,
    pub rate: f64,
    pub exponent: f64,
    pub constant_kind: ConstantKind,
    pub tilt: TiltChoice,
    pub tilt_t: Option<f64>,
    pub base_case_after_tilt: Option<DriftCase>,
    /// Classified through the image under `x -> -x`.
    pub via_mirror: bool,
    pub profile: Option<LaplaceProfile>,
}

fn simple(case: DriftCase, rate: f64, exponent: f64, kind: ConstantKind) -> RegimePrediction {
    RegimePrediction {
        drift_case: case,
        subcase: None,
        c_variant: None,
        rate,
        exponent,
        constant_kind: kind,
        tilt: TiltChoice::None,
        tilt_t: None,
        base_case_after_tilt: None,
        via_mirror: false,
        profile: None,
    }
}

fn compare(
    a: f64,
    b: f64,
    what: &'static str,
    exact: impl FnOnce() -> Option<Ordering>,
) -> Result<Ordering, RegimeError> {
    if (a - b).abs() > TIE_TOL {
        return Ok(a.partial_cmp(&b).unwrap());
    }
    exact().ok_or(RegimeError::TieUnresolvable(what))
}

/// Classifies a validated model.
pub fn classify(model: &OscillatingModel) -> Result<RegimePrediction, RegimeError> {
    use Drift::*;
    let case = model.drift_case;
    Ok(match (case.0, case.1) {
        (P, N) => simple(case, 1.0, 0.0, ConstantKind::InvariantMeasure),
        (Z, Z) | (P, Z) => simple(case, 1.0, 0.5, ConstantKind::CyFormula),
        (Z, N) => RegimePrediction { via_mirror: true, ..simple(case, 1.0, 0.5, ConstantKind::CyFormula) },
        (Z, P) => simple(case, 1.0, 1.5, ConstantKind::CxyUnknown),
        (N, Z) => RegimePrediction { via_mirror: true, ..simple(case, 1.0, 1.5, ConstantKind::CxyUnknown) },
        (P, P) | (N, P) => {
            if model.convention != Convention::TwoMedia {
                return Err(RegimeError::RequiresTwoMedia(case));
            }
            exponential_case(model)?
        }
        (N, N) => {
            let m = model.mirror();
            if m.convention != Convention::TwoMedia {
                return Err(RegimeError::RequiresTwoMedia(case));
            }
            let p = exponential_case(&m)?;
            RegimePrediction {
                drift_case: case,
                via_mirror: true,
                tilt_t: p.tilt_t.map(|t| -t),
                base_case_after_tilt: p.base_case_after_tilt.map(DriftCase::mirror),
                profile: model.laplace_profile().ok(),
                ..p
            }
        }
    })
}

struct Exact {
    u: Option<BigRational>,
    u_prime: Option<BigRational>,
}

fn exponential_case(model: &OscillatingModel) -> Result<RegimePrediction, RegimeError> {
    let (left, right) = (&model.left, &model.right);
    let (lambda, rho) = argmin_laplace(left)?;
    let (lambda_p, rho_p) = argmin_laplace(right)?;
    let ex = Exact { u: exact_argmin_base(left), u_prime: exact_argmin_base(right) };
    let identical = left.same_law(right);
    let lam_cmp = if identical {
        Ordering::Equal
    } else {
        compare(lambda, lambda_p, "lambda vs lambda'", || Some(ex.u.as_ref()?.cmp(ex.u_prime.as_ref()?)))?
    };
    let rho_cmp = if identical {
        Ordering::Equal
    } else {
        compare(rho, rho_p, "rho vs rho'", || {
            let a = laplace_exact(left, ex.u.as_ref()?)?;
            let b = laplace_exact(right, ex.u_prime.as_ref()?)?;
            Some(a.cmp(&b))
        })?
    };
    let crossing = || -> Result<(f64, f64), RegimeError> {
        match cross_point(left, right) {
            Ok(Crossing::At { lambda_star, rho_star }) => Ok((lambda_star, rho_star)),
            _ => Err(RegimeError::CrossingMissing),
        }
    };
    let profile = model.laplace_profile().ok();
    let mx = rho.max(rho_p);
    let case = model.drift_case;
    let np = case == DriftCase(Drift::N, Drift::P);
    let mut pred = RegimePrediction {
        drift_case: case,
        subcase: None,
        c_variant: None,
        rate: mx,
        exponent: 1.5,
        constant_kind: ConstantKind::CxyUnknown,
        tilt: TiltChoice::None,
        tilt_t: None,
        base_case_after_tilt: None,
        via_mirror: false,
        profile,
    };
    // row 1..=7 of the B/C tables
    let row = match rho_cmp {
        Ordering::Equal => 1u8,
        Ordering::Less => {
            let l_at = laplace(left, lambda_p)?;
            match compare(l_at, rho_p, "L(lambda') vs rho'", || {
                let u = ex.u_prime.as_ref()?;
                Some(laplace_exact(left, u)?.cmp(&laplace_exact(right, u)?))
            })? {
                Ordering::Less => 2,
                Ordering::Equal => 3,
                Ordering::Greater => 4,
            }
        }
        Ordering::Greater => {
            let lp_at = laplace(right, lambda)?;
            match compare(lp_at, rho, "L'(lambda) vs rho", || {
                let u = ex.u.as_ref()?;
                Some(laplace_exact(right, u)?.cmp(&laplace_exact(left, u)?))
            })? {
                Ordering::Less => 5,
                Ordering::Equal => 6,
                Ordering::Greater => 7,
            }
        }
    };
    use Drift::*;
    match lam_cmp {
        Ordering::Equal => {
            pred.tilt = TiltChoice::Lambda;
            pred.tilt_t = Some(lambda);
            pred.base_case_after_tilt = Some(DriftCase(Z, Z));
            if rho_cmp == Ordering::Equal {
                pred.subcase = Some(Subcase::A1);
                pred.rate = rho;
                pred.exponent = 0.5;
            } else {
                pred.subcase = Some(Subcase::A2);
            }
        }
        Ordering::Less => {
            let sub = [Subcase::B1, Subcase::B2, Subcase::B3, Subcase::B4, Subcase::B5, Subcase::B6, Subcase::B7]
                [row as usize - 1];
            pred.subcase = Some(sub);
            match row {
                1 | 4 | 7 => {
                    let (ls, rs) = crossing()?;
                    pred.rate = rs;
                    pred.exponent = 0.0;
                    pred.tilt = TiltChoice::LambdaStar;
                    pred.tilt_t = Some(ls);
                    pred.base_case_after_tilt = Some(DriftCase(P, N));
                }
                2 | 3 => {
                    pred.rate = rho_p;
                    pred.exponent = if row == 2 { 1.5 } else { 0.5 };
                    pred.tilt = TiltChoice::LambdaPrime;
                    pred.tilt_t = Some(lambda_p);
                    pred.base_case_after_tilt = Some(DriftCase(P, Z));
                }
                _ => {
                    pred.rate = rho;
                    pred.exponent = if row == 5 { 1.5 } else { 0.5 };
                    pred.tilt = TiltChoice::Lambda;
                    pred.tilt_t = Some(lambda);
                    pred.base_case_after_tilt = Some(DriftCase(Z, N));
                }
            }
        }
        Ordering::Greater => {
            pred.subcase = Some(Subcase::C);
            pred.c_variant = Some(row);
            if np {
                // L and L' cross at 0 with value 1: the walk is already (N,P)
                pred.tilt = TiltChoice::None;
                pred.tilt_t = Some(0.0);
                pred.base_case_after_tilt = Some(DriftCase(N, P));
            } else {
                match row {
                    1 | 4 | 7 => {
                        let (ls, _) = crossing()?;
                        pred.tilt = TiltChoice::LambdaStar;
                        pred.tilt_t = Some(ls);
                        pred.base_case_after_tilt = Some(DriftCase(N, P));
                    }
                    2 | 3 => {
                        pred.tilt = TiltChoice::LambdaPrime;
                        pred.tilt_t = Some(lambda_p);
                        pred.base_case_after_tilt = Some(DriftCase(N, Z));
                    }
                    _ => {
                        pred.tilt = TiltChoice::Lambda;
                        pred.tilt_t = Some(lambda);
                        pred.base_case_after_tilt = Some(DriftCase(Z, P));
                    }
                }
            }
        }
    }
    Ok(pred)
}

/// The tilt `t`, the tilted model and its base case. Rate-one cases return
/// `t = 0` and the model itself.
pub fn select_tilt(
    model: &OscillatingModel,
    prediction: &RegimePrediction,
) -> Result<(f64, OscillatingModel, DriftCase), RegimeError> {
    let Some(t) = prediction.tilt_t else {
        return Ok((0.0, model.clone(), model.drift_case));
    };
    if prediction.tilt == TiltChoice::LambdaStar && !t.is_finite() {
        return Err(RegimeError::CrossingMissing);
    }
    let left = tilt(&model.left, t)?;
    let origin = if model.convention == Convention::TwoMedia { left.clone() } else { tilt(&model.origin, t)? };
    let right = tilt(&model.right, t)?;
    let tilted = validate_model_with(left, origin, right, Checks { o3: !model.o3_waived() })?;
    let base = prediction.base_case_after_tilt.unwrap_or(tilted.drift_case);
    Ok((t, tilted, base))
}

/// `max_t min(L(t), L'(t))` over a grid of `t` in `[lo, hi]`.
pub fn max_min_transform(model: &OscillatingModel, lo: f64, hi: f64, points: usize) -> f64 {
    (0..=points)
        .map(|k| lo + (hi - lo) * k as f64 / points as f64)
        .filter_map(|t| Some(laplace(&model.left, t).ok()?.min(laplace(&model.right, t).ok()?)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Green functions of the two killed half-line walks, combined with the
/// invariant measure of the switching chain: the balayage `lambda_X`.
#[derive(Clone, Debug)]
pub struct Balayage {
    origin_stay: f64,
    left: HalfLineGreen,
    right: HalfLineGreen,
    left_edge: i64,
    nu: Vec<(i64, f64)>,
    left_desc: (f64, bool),
    right_desc: (f64, bool),
}

impl Balayage {
    /// `range` bounds the distance of `y` from the origin.
    pub fn new(model: &OscillatingModel, nu: Vec<(i64, f64)>, range: usize) -> Result<Self, RegimeError> {
        let left_edge = match model.convention {
            Convention::ThreeMedia => -1,
            Convention::TwoMedia => 0,
        };
        let mirrored = model.right.mirror();
        let desc = |d: &LatticeDist| -> Result<(f64, bool), RegimeError> {
            let h = ladder_heights(d, LadderVariant::WeakDesc)?;
            Ok((h.mean(), d.drift() == Drift::P))
        };
        Ok(Balayage {
            origin_stay: model.origin.prob(0),
            left: HalfLineGreen::new(&model.left, left_edge, range)?,
            right: HalfLineGreen::new(&mirrored, -1, range)?,
            left_edge,
            left_desc: desc(&model.left)?,
            right_desc: desc(&mirrored)?,
            nu,
        })
    }

    /// Expected visits to `y` before the first switch, from `x`.
    pub fn green(&self, x: i64, y: i64) -> f64 {
        if x <= self.left_edge {
            self.left.g(x, y)
        } else if x >= 1 {
            self.right.g(-x, -y)
        } else if y == 0 {
            1.0 / (1.0 - self.origin_stay)
        } else {
            0.0
        }
    }

    pub fn lambda_x(&self, y: i64) -> f64 {
        self.nu.iter().map(|&(x, w)| w * self.green(x, y)).sum()
    }

    /// `(lambda_X(-inf), lambda_X(+inf))`.
    pub fn limits(&self) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for &(x, w) in &self.nu {
            if x <= self.left_edge {
                lo += w * self.left.g_at_minus_infinity(x, self.left_desc.0, self.left_desc.1);
            } else if x >= 1 {
                hi += w * self.right.g_at_minus_infinity(-x, self.right_desc.0, self.right_desc.1);
            }
        }
        (lo, hi)
    }
}

/// `C_y = lambda_X(y) / (sqrt(pi/2) (sigma lambda_X(-inf) + sigma' lambda_X(+inf)))`
/// for `(Z,Z)` and `(P,Z)`, through the mirror for `(Z,N)`. In `(P,Z)` the
/// left limit vanishes, which leaves the one-sided formula.
pub fn predicted_constant_cy(model: &OscillatingModel, y: i64, spectral: &SpectralData) -> Result<f64, RegimeError> {
    let case = model.drift_case;
    if case == DriftCase(Drift::Z, Drift::N) {
        let m = model.mirror();
        let s = spectral_for(&m)?;
        return predicted_constant_cy(&m, -y, &s);
    }
    if case != DriftCase(Drift::Z, Drift::Z) && case != DriftCase(Drift::P, Drift::Z) {
        return Err(RegimeError::NoConstant(case));
    }
    let nu = spectral.nu.clone().ok_or(RegimeError::NoInvariantMeasure)?;
    let range = 4 * (y.unsigned_abs() as usize).max(256);
    let bal = Balayage::new(model, nu, range)?;
    let (lo, hi) = bal.limits();
    // plateau check: lambda_X far out on the centered sides must match its limit
    let far = (range / 2) as i64;
    let mut worst: f64 = 0.0;
    if lo > 0.0 {
        worst = worst.max((bal.lambda_x(-far) / lo - 1.0).abs());
    }
    if hi > 0.0 {
        worst = worst.max((bal.lambda_x(far) / hi - 1.0).abs());
    }
    if worst > 0.02 {
        return Err(RegimeError::PlateauNotReached(worst));
    }
    let denom = (PI / 2.0).sqrt() * (model.left.sigma() * lo + model.right.sigma() * hi);
    Ok(bal.lambda_x(y) / denom)
}

/// Spectral data with the default weight and the exit-kernel `Q`.
pub fn spectral_for(model: &OscillatingModel) -> Result<SpectralData, RegimeError> {
    let q = default_aggregate(model)?;
    let window = Window { lo: -64, hi: 64 };
    Ok(power_iterate(&q, window, WeightSpec::default())?)
}

/// Joined report of classification, tilt and constants.
#[derive(Clone, Debug, Serialize)]
pub struct RegimeReport {
    pub case: DriftCase,
    pub subcase: Option<Subcase>,
    pub c_variant: Option<u8>,
    pub rate: f64,
    pub exponent: f64,
    pub tilt_t: Option<f64>,
    pub base_case_after_tilt: Option<DriftCase>,
    pub constant_kind: ConstantKind,
    pub constants: serde_json::Map<String, serde_json::Value>,
    pub profile: Option<LaplaceProfile>,
}

/// Classification plus every constant the case admits.
pub fn predict(model: &OscillatingModel) -> Result<RegimeReport, RegimeError> {
    let p = classify(model)?;
    let mut constants = serde_json::Map::new();
    match p.constant_kind {
        ConstantKind::CyFormula => {
            let target = if p.via_mirror { model.mirror() } else { model.clone() };
            let s = spectral_for(&target)?;
            for y in [-1i64, 0, 1] {
                let c = predicted_constant_cy(&target, if p.via_mirror { -y } else { y }, &s)?;
                constants.insert(format!("C_{y}"), serde_json::json!(c));
            }
        }
        ConstantKind::InvariantMeasure => {
            constants.insert("limit".into(), serde_json::json!("nu(y)"));
        }
        ConstantKind::CxyUnknown => {}
    }
    if let (Drift::Z, _) | (_, Drift::Z) = (model.drift_case.0, model.drift_case.1) {
        if model.left.drift() == Drift::Z {
            constants.insert("c".into(), serde_json::json!(crate::ladder::c_direct(&model.left)?));
        }
        if model.right.drift() == Drift::Z {
            constants.insert("c_prime".into(), serde_json::json!(crate::ladder::c_direct(&model.right.mirror())?));
        }
    }
    Ok(RegimeReport {
        case: p.drift_case,
        subcase: p.subcase,
        c_variant: p.c_variant,
        rate: p.rate,
        exponent: p.exponent,
        tilt_t: p.tilt_t,
        base_case_after_tilt: p.base_case_after_tilt,
        constant_kind: p.constant_kind,
        constants,
        profile: p.profile,
    })
}
