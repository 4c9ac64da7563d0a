//! Small numerical kernels shared by the modules: bisection, a banded linear
//! solver, rational reconstruction and fixed-precision formatting.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Tolerance used for every bisection on derivative or difference roots.
pub const BISECTION_TOL: f64 = 1e-12;
/// Iteration cap for every bisection.
pub const BISECTION_MAX_ITER: usize = 200;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Stops when `|f(mid)| <= tol`, when the bracket stops shrinking, or after
/// [`BISECTION_MAX_ITER`] halvings. Returns the midpoint of the final bracket.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX_ITER {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if f_mid.abs() <= tol && (hi - lo) <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    mid
}

/// Square banded matrix stored by diagonals, solved by Gaussian elimination
/// without pivoting. Intended for nonsingular M-matrices of the form `I - A`
/// with `A` substochastic, where elimination without pivoting is stable.
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    // row-major storage: row i holds columns i-lower ..= i+upper (plus fill)
    data: Vec<f64>,
    stride: usize,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        // elimination without pivoting creates no fill outside the band
        let stride = lower + upper + 1;
        BandedMatrix { n, lower, upper, data: vec![0.0; n * stride], stride }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.lower < i || j > i + self.upper {
            None
        } else {
            Some(i * self.stride + (j + self.lower - i))
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// In-place LU factorisation; returns `None` on a vanishing pivot.
    pub fn factor(mut self) -> Option<BandedLu> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot.abs() < 1e-300 {
                return None;
            }
            let last_row = (k + self.lower).min(n - 1);
            let last_col = (k + self.upper).min(n - 1);
            for i in k + 1..=last_row {
                let si = self.slot(i, k).unwrap();
                let factor = self.data[si] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[si] = factor;
                for j in k + 1..=last_col {
                    let akj = self.get(k, j);
                    if akj != 0.0 {
                        let s = self.slot(i, j).unwrap();
                        self.data[s] -= factor * akj;
                    }
                }
            }
        }
        Some(BandedLu { m: self })
    }
}

/// LU factors of a [`BandedMatrix`].
#[derive(Clone, Debug)]
pub struct BandedLu {
    m: BandedMatrix,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let n = m.n;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let first = i.saturating_sub(m.lower);
            let mut s = x[i];
            for (k, xk) in x.iter().enumerate().take(i).skip(first) {
                s -= m.get(i, k) * xk;
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let last = (i + m.upper).min(n - 1);
            let mut s = x[i];
            for (k, xk) in x.iter().enumerate().take(last + 1).skip(i + 1) {
                s -= m.get(i, k) * xk;
            }
            x[i] = s / m.get(i, i);
        }
        x
    }
}

/// Convergents of the continued fraction of `x`, stopping once the
/// denominator exceeds `max_den`.
pub fn convergents(x: f64, max_den: u64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    if !x.is_finite() {
        return out;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..40 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let ai = a as i128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > max_den as i128 {
            break;
        }
        out.push((h2 as i64, k2 as i64));
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        let frac = r - a;
        if frac.abs() < 1e-15 {
            break;
        }
        r = 1.0 / frac;
    }
    out
}

/// Exact rational value of a small fraction.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Integer power of a rational, negative exponents allowed.
pub fn rpow(base: &BigRational, exp: i64) -> BigRational {
    let mut acc = BigRational::one();
    let mut b = if exp < 0 { base.recip() } else { base.clone() };
    let mut e = exp.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            acc *= &b;
        }
        b = &b * &b;
        e >>= 1;
    }
    acc
}

/// Lossy conversion of a rational to `f64`.
pub fn rat_to_f64(r: &BigRational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // fall back on scaled integer parts for huge numerators and denominators
    let n = r.numer();
    let d = r.denom();
    let nb = n.bits() as i64;
    let db = d.bits() as i64;
    let shift = (nb - db).clamp(-1000, 1000);
    let scaled = if shift >= 0 {
        BigRational::new(n.clone(), d.clone() << (shift as usize))
    } else {
        BigRational::new(n.clone() << ((-shift) as usize), d.clone())
    };
    scaled.to_f64().unwrap_or(0.0) * 2f64.powi(shift as i32)
}

/// Sign of a rational as -1, 0 or 1.
pub fn rat_sign(r: &BigRational) -> i32 {
    if r.is_zero() {
        0
    } else if r.is_positive() {
        1
    } else {
        -1
    }
}

/// Formats a float with 17 significant digits, round-trip exact.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

/// Least squares fit of `y = a + b x`; returns `(a, b, rms residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let mut ss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let r = y - a - b * x;
        ss += r * r;
    }
    (a, b, (ss / n).sqrt())
}

/// Median of a slice (average of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_solve_matches_tridiagonal() {
        let n = 6;
        let mut m = BandedMatrix::zeros(n, 1, 1);
        for i in 0..n {
            m.add(i, i, 2.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                m.add(i, i + 1, -1.0);
            }
        }
        let lu = m.factor().unwrap();
        let x = lu.solve(&[1.0; 6]);
        // exact solution of the discrete Poisson problem: x_i = (i+1)(n-i)/2
        for (i, xi) in x.iter().enumerate() {
            let exact = ((i + 1) * (n - i)) as f64 / 2.0;
            assert!((xi - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn convergents_recover_fraction() {
        let c = convergents(7.0 / 155.0, 1_000_000);
        assert_eq!(*c.last().unwrap(), (7, 155));
    }

    #[test]
    fn rpow_negative() {
        assert_eq!(rpow(&ratio(2, 3), -2), ratio(9, 4));
    }
}
