//! One-dimensional binomial approximation of Type I dynamics on a graph with mean degree
//! `d`: a node sees `k ~ Binomial(d, nu)` blue neighbors and turns blue when `k > sigma d`,
//! giving `d nu / dt = theta_sigma(nu, d) - nu`.

use std::io::Write;

use thiserror::Error;

use crate::scalar::Scalar;

/// Points of the coarse scan that brackets the critical value.
pub const SCAN_POINTS: usize = 1000;
/// Scan values at most this large in magnitude count as zero.
pub const ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BinomError {
    #[error("invalid parameter {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error("k = {k} outside 0..={d}")]
    Domain { k: usize, d: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn param(name: &'static str, msg: impl Into<String>) -> BinomError {
    BinomError::Param { name, msg: msg.into() }
}

/// `C(d, k) alpha^k (1 - alpha)^(d - k)`, evaluated through log-gamma.
pub fn q_binom<T: Scalar>(d: usize, alpha: T, k: usize) -> Result<T, BinomError> {
    if k > d {
        return Err(BinomError::Domain { k, d });
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(param("alpha", format!("{alpha} outside [0, 1]")));
    }
    Ok(q_unchecked(d, alpha, k))
}

fn q_unchecked<T: Scalar>(d: usize, alpha: T, k: usize) -> T {
    if alpha == T::zero() {
        return if k == 0 { T::one() } else { T::zero() };
    }
    if alpha == T::one() {
        return if k == d { T::one() } else { T::zero() };
    }
    let one = T::one();
    let (dt, kt) = (T::of_usize(d), T::of_usize(k));
    let log_c = (dt + one).ln_gamma() - (kt + one).ln_gamma() - (dt - kt + one).ln_gamma();
    (log_c + kt * alpha.ln() + (dt - kt) * (-alpha).ln_1p()).exp()
}

/// `sigma d` as an exact count when it is an integer (within `1e-9`).
fn integer_boundary<T: Scalar>(d: usize, sigma: T) -> Option<usize> {
    let x = sigma * T::of_usize(d);
    let r = x.round();
    ((x - r).abs() < T::of(1e-9)).then(|| r.to_usize().unwrap_or(0))
}

/// `sum_{k > sigma d} Q(d, nu, k)`, plus `Q(d, nu, sigma d) / 2` when `sigma d` is an integer.
pub fn theta_sigma<T: Scalar>(nu: T, d: usize, sigma: T) -> Result<T, BinomError> {
    if !(nu >= T::zero() && nu <= T::one()) {
        return Err(param("nu", format!("{nu} outside [0, 1]")));
    }
    if !(sigma >= T::zero() && sigma <= T::one()) {
        return Err(param("sigma", format!("{sigma} outside [0, 1]")));
    }
    if d == 0 {
        return Err(param("d", "degree must be at least 1"));
    }
    Ok(theta_unchecked(nu, d, sigma))
}

fn theta_unchecked<T: Scalar>(nu: T, d: usize, sigma: T) -> T {
    let (start, boundary) = match integer_boundary(d, sigma) {
        Some(m) => (m + 1, Some(m)),
        None => ((sigma * T::of_usize(d)).floor().to_usize().unwrap_or(0) + 1, None),
    };
    let mut sum = T::zero();
    for k in start..=d {
        sum = sum + q_unchecked(d, nu, k);
    }
    if let Some(m) = boundary {
        sum = sum + T::half() * q_unchecked(d, nu, m);
    }
    sum.min(T::one())
}

/// Integer mean degree and Type I threshold of the approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxModel<T> {
    pub mean_degree: usize,
    pub sigma: T,
}

impl<T: Scalar> ApproxModel<T> {
    pub fn new(mean_degree: usize, sigma: T) -> Result<Self, BinomError> {
        if mean_degree == 0 {
            return Err(param("mean_degree", "must be at least 1"));
        }
        if !(sigma >= T::zero() && sigma <= T::one()) {
            return Err(param("sigma", format!("{sigma} outside [0, 1]")));
        }
        Ok(Self { mean_degree, sigma })
    }

    /// Rounds a real mean degree to the nearest integer.
    pub fn from_mean_degree(mean: f64, sigma: T) -> Result<Self, BinomError> {
        if !mean.is_finite() || mean < 0.5 {
            return Err(param("mean_degree", format!("{mean} rounds below 1")));
        }
        Self::new(mean.round() as usize, sigma)
    }

    pub fn theta(&self, nu: T) -> Result<T, BinomError> {
        theta_sigma(nu, self.mean_degree, self.sigma)
    }

    /// `theta_sigma(nu) - nu`.
    pub fn drift(&self, nu: T) -> T {
        theta_unchecked(nu, self.mean_degree, self.sigma) - nu
    }

    /// Writes `nu, theta_minus_nu` at `points + 1` equally spaced values of `nu`.
    pub fn write_curve_csv<W: Write>(&self, out: W, points: usize) -> Result<(), BinomError> {
        if points == 0 {
            return Err(param("points", "must be positive"));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["nu", "theta_minus_nu"])?;
        for i in 0..=points {
            let nu = T::of_usize(i) / T::of_usize(points);
            w.write_record([nu.to_string(), self.drift(nu).to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Forward Euler for `d nu / dt = theta_sigma(nu, d) - nu`; returns the values at
/// `t = 0, dt, ..., horizon`.
pub fn integrate_nu<T: Scalar>(model: &ApproxModel<T>, nu0: T, dt: T, horizon: T) -> Result<Vec<T>, BinomError> {
    if !(nu0 >= T::zero() && nu0 <= T::one()) {
        return Err(param("nu0", format!("{nu0} outside [0, 1]")));
    }
    if !(dt > T::zero() && dt <= T::one()) {
        return Err(param("dt", format!("{dt} not in (0, 1]")));
    }
    if !(horizon >= T::zero()) || !horizon.is_finite() {
        return Err(param("horizon", "must be finite and non-negative"));
    }
    let steps = (horizon / dt).round().to_usize().unwrap_or(0);
    let mut out = Vec::with_capacity(steps + 1);
    let mut nu = nu0;
    out.push(nu);
    for _ in 0..steps {
        nu = (nu + dt * model.drift(nu)).max(T::zero()).min(T::one());
        out.push(nu);
    }
    Ok(out)
}

/// Result of [`critical_nu`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalNu<T> {
    Root(T),
    /// `theta - nu` never goes from negative to positive inside `(0, 1)`.
    NoRoot,
}

impl<T: Copy> CriticalNu<T> {
    pub fn root(&self) -> Option<T> {
        match self {
            Self::Root(x) => Some(*x),
            Self::NoRoot => None,
        }
    }
}

/// The unstable interior zero of `theta_sigma(nu, d) - nu`, which separates the basins of
/// 0 and 1.
///
/// The drift is scanned at `nu = i / 1000`, `i = 1..999`, with values within `1e-12` of
/// zero treated as zero. The separator is the first place the sign goes from negative to
/// positive moving upward. An immediate change is refined by bisection; a run of zeros
/// between the negative and positive points yields the midpoint of the run (for `d = 2`,
/// `sigma = 1/2` the drift vanishes identically and the result is `1/2`).
pub fn critical_nu<T: Scalar>(model: &ApproxModel<T>) -> CriticalNu<T> {
    let tol = T::of(ZERO_TOLERANCE);
    let nu_at = |i: usize| T::of_usize(i) / T::of_usize(SCAN_POINTS);
    let sign = |x: T| {
        if x > tol {
            1
        } else if x < -tol {
            -1
        } else {
            0
        }
    };
    let mut last_neg: Option<usize> = None;
    let mut any_neg = false;
    for i in 1..SCAN_POINTS {
        match sign(model.drift(nu_at(i))) {
            -1 => {
                last_neg = Some(i);
                any_neg = true;
            }
            1 if any_neg => {
                let j = last_neg.expect("negative point seen");
                if i == j + 1 {
                    return CriticalNu::Root(bisect(model, nu_at(j), nu_at(i)));
                }
                return CriticalNu::Root((nu_at(j + 1) + nu_at(i - 1)) * T::half());
            }
            _ => {}
        }
    }
    // zeros running into the upper end after negatives: the drift touches zero there
    match last_neg {
        Some(j) if j + 1 < SCAN_POINTS && sign(model.drift(nu_at(SCAN_POINTS - 1))) == 0 => {
            CriticalNu::Root((nu_at(j + 1) + nu_at(SCAN_POINTS - 1)) * T::half())
        }
        _ => {
            // the fully degenerate case: the drift vanishes on the whole scan
            if !any_neg && (1..SCAN_POINTS).all(|i| sign(model.drift(nu_at(i))) == 0) {
                CriticalNu::Root(T::half())
            } else {
                CriticalNu::NoRoot
            }
        }
    }
}

fn bisect<T: Scalar>(model: &ApproxModel<T>, mut lo: T, mut hi: T) -> T {
    for _ in 0..200 {
        let mid = (lo + hi) * T::half();
        if mid <= lo || mid >= hi {
            break;
        }
        if model.drift(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * T::half()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};

    fn rat(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn q_exact(d: usize, alpha: &BigRational, k: usize) -> BigRational {
        let mut c = BigRational::one();
        for i in 0..k {
            c *= rat((d - i) as i64, (i + 1) as i64);
        }
        let one_minus = BigRational::one() - alpha;
        c * num_traits::pow(alpha.clone(), k) * num_traits::pow(one_minus, d - k)
    }

    fn theta_exact(nu: &BigRational, d: usize, sigma: &BigRational) -> BigRational {
        let bound = sigma * BigRational::from_integer(BigInt::from(d));
        let mut s = BigRational::zero();
        for k in 0..=d {
            let kk = BigRational::from_integer(BigInt::from(k));
            if kk > bound {
                s += q_exact(d, nu, k);
            } else if kk == bound {
                s += q_exact(d, nu, k) * rat(1, 2);
            }
        }
        s
    }

    #[test]
    fn q_matches_exact_rational() {
        let exact = q_exact(40, &rat(3, 10), 12).to_f64().unwrap();
        assert!((q_binom(40, 0.3, 12).unwrap() - exact).abs() < 1e-12);
        assert_eq!(q_binom(2, 0.5f64, 1).unwrap(), 0.5);
        assert!(q_binom(2, 0.5f64, 3).is_err());
    }

    #[test]
    fn q_normalizes() {
        let s: f64 = (0..=100).map(|k| q_binom(100, 0.37, k).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
        let s: f64 = (0..=10_000).map(|k| q_binom(10_000, 0.61, k).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn theta_matches_exact_rational() {
        for (nu, sigma, d) in [((1, 4), (3, 10), 40), ((1, 2), (1, 2), 40), ((7, 10), (1, 3), 9), ((2, 5), (3, 10), 10)]
        {
            let exact = theta_exact(&rat(nu.0, nu.1), d, &rat(sigma.0, sigma.1)).to_f64().unwrap();
            let got = theta_sigma(nu.0 as f64 / nu.1 as f64, d, sigma.0 as f64 / sigma.1 as f64).unwrap();
            assert!((got - exact).abs() < 1e-12, "{nu:?} {sigma:?} {d}: {got} vs {exact}");
        }
    }

    #[test]
    fn theta_endpoints_and_symmetry() {
        for d in [1, 2, 7, 40] {
            assert_eq!(theta_sigma(0.0, d, 0.3).unwrap(), 0.0);
            assert_eq!(theta_sigma(1.0, d, 0.3).unwrap(), 1.0);
        }
        for d in (2..=40).step_by(2) {
            assert!((theta_sigma(0.5f64, d, 0.5).unwrap() - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn critical_values() {
        for d in [2, 4, 10, 40, 200] {
            let c = critical_nu(&ApproxModel::new(d, 0.5f64).unwrap()).root().unwrap();
            assert!((c - 0.5).abs() < 1e-12, "d = {d}: {c}");
        }
        let c = critical_nu(&ApproxModel::new(40, 0.3).unwrap()).root().unwrap();
        assert!(c < 0.3);
        // sigma d < 1: every blue neighbor wins, the drift stays positive
        assert_eq!(critical_nu(&ApproxModel::new(40, 0.01).unwrap()), CriticalNu::NoRoot);
    }

    #[test]
    fn critical_value_matches_dense_scan() {
        let m = ApproxModel::new(40, 0.3).unwrap();
        let c = critical_nu(&m).root().unwrap();
        let n = 100_000;
        let mut prev = (1.0 / n as f64, m.drift(1.0 / n as f64));
        let mut oracle = None;
        for i in 2..n {
            let nu = i as f64 / n as f64;
            let g = m.drift(nu);
            if prev.1 < 0.0 && g >= 0.0 {
                oracle = Some(prev.0 + (nu - prev.0) * (-prev.1) / (g - prev.1));
                break;
            }
            prev = (nu, g);
        }
        assert!((c - oracle.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn integration_fixed_points_and_basins() {
        let m = ApproxModel::new(40, 0.5).unwrap();
        assert!(integrate_nu(&m, 0.0, 0.01, 5.0).unwrap().iter().all(|&x| x == 0.0));
        assert!(integrate_nu(&m, 1.0, 0.01, 5.0).unwrap().iter().all(|&x| x == 1.0));
        assert!(*integrate_nu(&m, 0.55, 0.01, 30.0).unwrap().last().unwrap() > 0.999);
        assert!(*integrate_nu(&m, 0.45, 0.01, 30.0).unwrap().last().unwrap() < 0.001);
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(ApproxModel::from_mean_degree(39.6, 0.5).unwrap().mean_degree, 40);
        assert_eq!(ApproxModel::from_mean_degree(40.4, 0.5).unwrap().mean_degree, 40);
        assert!(ApproxModel::from_mean_degree(0.2, 0.5).is_err());
    }
}
