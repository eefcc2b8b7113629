//! Combat-power functions.
//!
//! `f_RB` maps the fraction of blue neighbors of a red node to its red→blue rate.
//! The blue→red rate is always the dual `f_BR(x) = 1 - f_RB(1 - x)` of the red
//! neighbor fraction `x`, so the two rates of a node sum to one.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Default half-width of the Type I tie band around `sigma`.
pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Number of interior grid points used by [`Combat::validate_shape`].
pub const SHAPE_GRID: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum CombatError {
    #[error("argument {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid parameter {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error("table line {line}: {msg}")]
    Table { line: usize, msg: String },
}

/// The shape family of a combat-power function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family<T> {
    /// Step at `sigma`: 0 below, 1 above, 1/2 on the tie.
    TypeI { sigma: T },
    /// Sigmoid through `(tau, tau)`: `tau (x/tau)^k` below, `1 - (1-tau)((1-x)/(1-tau))^k`
    /// above. `tau = 1/2`, `k = 2` gives `2x^2` and `-2x^2 + 4x - 1`.
    TypeII { tau: T, exponent: T },
    /// Concave `x^a`, `0 < a < 1`.
    TypeIII { exponent: T },
    /// Convex `x^a`, `a > 1`.
    TypeIV { exponent: T },
    /// Piecewise-linear interpolation of user samples.
    Tabulated { xs: Vec<T>, ys: Vec<T> },
}

/// A validated combat-power function.
#[derive(Debug, Clone, PartialEq)]
pub struct Combat<T> {
    family: Family<T>,
    boundary_tolerance: T,
}

impl<T: Scalar> Combat<T> {
    pub fn new(family: Family<T>) -> Result<Self, CombatError> {
        let unit_open = |name: &'static str, v: T| {
            if v > T::zero() && v < T::one() {
                Ok(())
            } else {
                Err(CombatError::Param { name, msg: format!("{v} not in (0, 1)") })
            }
        };
        match &family {
            Family::TypeI { sigma } => unit_open("sigma", *sigma)?,
            Family::TypeII { tau, exponent } => {
                unit_open("tau", *tau)?;
                if !(*exponent > T::one()) {
                    return Err(CombatError::Param { name: "exponent", msg: "Type II needs k > 1".into() });
                }
            }
            Family::TypeIII { exponent } => unit_open("exponent", *exponent)?,
            Family::TypeIV { exponent } => {
                if !(*exponent > T::one()) || !exponent.is_finite() {
                    return Err(CombatError::Param { name: "exponent", msg: "Type IV needs a > 1".into() });
                }
            }
            Family::Tabulated { xs, ys } => validate_table(xs, ys)?,
        }
        Ok(Self { family, boundary_tolerance: T::of(DEFAULT_BOUNDARY_TOLERANCE) })
    }

    pub fn type_i(sigma: T) -> Result<Self, CombatError> {
        Self::new(Family::TypeI { sigma })
    }

    pub fn type_ii(tau: T, exponent: T) -> Result<Self, CombatError> {
        Self::new(Family::TypeII { tau, exponent })
    }

    /// Type II with `tau = 1/2`: `2x^2` on `[0, 1/2]`, `-2x^2 + 4x - 1` on `[1/2, 1]`.
    pub fn type_ii_default() -> Self {
        Self::type_ii(T::half(), T::two()).expect("valid defaults")
    }

    pub fn type_iii(exponent: T) -> Result<Self, CombatError> {
        Self::new(Family::TypeIII { exponent })
    }

    /// `f(x) = sqrt(x)`.
    pub fn type_iii_sqrt() -> Self {
        Self::type_iii(T::half()).expect("valid defaults")
    }

    pub fn type_iv(exponent: T) -> Result<Self, CombatError> {
        Self::new(Family::TypeIV { exponent })
    }

    /// `f(x) = x^2`.
    pub fn type_iv_square() -> Self {
        Self::type_iv(T::two()).expect("valid defaults")
    }

    pub fn tabulated(xs: Vec<T>, ys: Vec<T>) -> Result<Self, CombatError> {
        Self::new(Family::Tabulated { xs, ys })
    }

    /// Reads a two-column `x f(x)` table; `#` starts a comment.
    pub fn from_table_str(text: &str) -> Result<Self, CombatError> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CombatError::Table { line: i + 1, msg };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(err(format!("expected 2 columns, found {}", cols.len())));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|_| err(format!("not a number: {s:?}")));
            xs.push(T::of(parse(cols[0])?));
            ys.push(T::of(parse(cols[1])?));
        }
        Self::tabulated(xs, ys)
    }

    pub fn from_table_file(path: impl AsRef<Path>) -> Result<Self, CombatError> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| CombatError::Table { line: 0, msg: e.to_string() })?;
        Self::from_table_str(&text)
    }

    pub fn with_boundary_tolerance(mut self, eps: T) -> Self {
        self.boundary_tolerance = eps.abs();
        self
    }

    pub fn family(&self) -> &Family<T> {
        &self.family
    }

    pub fn boundary_tolerance(&self) -> T {
        self.boundary_tolerance
    }

    /// `sigma` for Type I, `tau` for Type II.
    pub fn threshold(&self) -> Option<T> {
        match self.family {
            Family::TypeI { sigma } => Some(sigma),
            Family::TypeII { tau, .. } => Some(tau),
            _ => None,
        }
    }

    /// Returns a copy with the threshold replaced (Types I and II only).
    pub fn with_threshold(&self, threshold: T) -> Result<Self, CombatError> {
        let family = match &self.family {
            Family::TypeI { .. } => Family::TypeI { sigma: threshold },
            Family::TypeII { exponent, .. } => Family::TypeII { tau: threshold, exponent: *exponent },
            _ => return Err(CombatError::Param { name: "threshold", msg: "family has no threshold".into() }),
        };
        Ok(Self::new(family)?.with_boundary_tolerance(self.boundary_tolerance))
    }

    pub fn is_type_i(&self) -> bool {
        matches!(self.family, Family::TypeI { .. })
    }

    /// Red→blue rate for blue-neighbor fraction `x`.
    pub fn eval_rb(&self, x: T) -> Result<T, CombatError> {
        check_unit(x)?;
        Ok(self.rate_rb(x))
    }

    /// Blue→red rate for red-neighbor fraction `x`.
    pub fn eval_br(&self, x: T) -> Result<T, CombatError> {
        check_unit(x)?;
        Ok(self.rate_br(x))
    }

    /// Unchecked [`eval_rb`](Self::eval_rb) for hot loops; `x` must lie in `[0, 1]`.
    #[inline]
    pub fn rate_rb(&self, x: T) -> T {
        debug_assert!(x >= T::zero() && x <= T::one(), "argument {x} outside [0, 1]");
        match &self.family {
            Family::TypeI { sigma } => {
                if x > *sigma + self.boundary_tolerance {
                    T::one()
                } else if x < *sigma - self.boundary_tolerance {
                    T::zero()
                } else {
                    T::half()
                }
            }
            Family::TypeII { tau, exponent } => {
                if x <= *tau {
                    *tau * (x / *tau).powf(*exponent)
                } else {
                    let up = T::one() - *tau;
                    T::one() - up * ((T::one() - x) / up).powf(*exponent)
                }
            }
            Family::TypeIII { exponent } | Family::TypeIV { exponent } => {
                if x == T::zero() {
                    T::zero()
                } else {
                    x.powf(*exponent)
                }
            }
            Family::Tabulated { xs, ys } => interpolate(xs, ys, x),
        }
    }

    #[inline]
    pub fn rate_br(&self, x: T) -> T {
        T::one() - self.rate_rb(T::one() - x)
    }

    /// Analytic derivative of `f_RB`; `None` where it is undefined or infinite.
    ///
    /// Type I is treated as nowhere differentiable.
    pub fn derivative_rb(&self, x: T) -> Option<T> {
        if !(x >= T::zero() && x <= T::one()) {
            return None;
        }
        let d = match &self.family {
            Family::TypeI { .. } => return None,
            Family::TypeII { tau, exponent } => {
                let k = *exponent;
                if x <= *tau {
                    k * (x / *tau).powf(k - T::one())
                } else {
                    let up = T::one() - *tau;
                    k * ((T::one() - x) / up).powf(k - T::one())
                }
            }
            Family::TypeIII { exponent } | Family::TypeIV { exponent } => {
                let a = *exponent;
                if x == T::zero() {
                    if a > T::one() {
                        T::zero()
                    } else {
                        return None;
                    }
                } else {
                    a * x.powf(a - T::one())
                }
            }
            Family::Tabulated { xs, ys } => {
                let slope = |i: usize| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
                match xs.iter().position(|&k| k == x) {
                    Some(0) => slope(0),
                    Some(i) if i == xs.len() - 1 => slope(i - 1),
                    Some(i) => {
                        let (l, r) = (slope(i - 1), slope(i));
                        if (l - r).abs() <= T::of(1e-12) * (T::one() + l.abs()) {
                            l
                        } else {
                            return None;
                        }
                    }
                    None => slope(segment(xs, x)),
                }
            }
        };
        d.is_finite().then_some(d)
    }

    /// Grid check of the defining properties: endpoints, range, monotonicity and the
    /// family's curvature pattern on `SHAPE_GRID` interior points.
    pub fn validate_shape(&self) -> ShapeReport<T> {
        validate_shape_with(|x| self.rate_rb(x), &self.family)
    }
}

impl<T: Scalar> fmt::Display for Combat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::TypeI { sigma } => write!(f, "type1(sigma={sigma})"),
            Family::TypeII { tau, exponent } => write!(f, "type2(tau={tau},k={exponent})"),
            Family::TypeIII { exponent } => write!(f, "type3(a={exponent})"),
            Family::TypeIV { exponent } => write!(f, "type4(a={exponent})"),
            Family::Tabulated { xs, .. } => write!(f, "tabulated({} points)", xs.len()),
        }
    }
}

fn check_unit<T: Scalar>(x: T) -> Result<(), CombatError> {
    if x >= T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(CombatError::Domain(x.as_f64()))
    }
}

fn validate_table<T: Scalar>(xs: &[T], ys: &[T]) -> Result<(), CombatError> {
    let err = |msg: String| CombatError::Table { line: 0, msg };
    if xs.len() != ys.len() {
        return Err(err(format!("{} x values but {} f(x) values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(err("need at least two samples".into()));
    }
    if xs[0] != T::zero() || xs[xs.len() - 1] != T::one() {
        return Err(err("x must run from 0 to 1".into()));
    }
    if let Some(i) = xs.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(err(format!("x not strictly increasing at sample {}", i + 1)));
    }
    if let Some(i) = ys.iter().position(|y| !(*y >= T::zero() && *y <= T::one())) {
        return Err(err(format!("f(x) outside [0, 1] at sample {i}")));
    }
    Ok(())
}

/// Index of the table segment containing `x`.
fn segment<T: Scalar>(xs: &[T], x: T) -> usize {
    match xs.binary_search_by(|k| k.partial_cmp(&x).expect("finite table")) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i.saturating_sub(1).min(xs.len() - 2),
    }
}

fn interpolate<T: Scalar>(xs: &[T], ys: &[T], x: T) -> T {
    let i = segment(xs, x);
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// Sign of the second differences over a range of the shape grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    Convex,
    Concave,
    Linear,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeViolation<T> {
    Endpoint {
        x: T,
        value: T,
    },
    OutOfRange {
        x: T,
        value: T,
    },
    Decreasing {
        x: T,
        drop: T,
    },
    /// `f(x) - x` has the wrong sign for the family at `x`.
    DiagonalSide {
        x: T,
        value: T,
    },
    /// Curvature on `[lo, hi]` does not match the family.
    Curvature {
        lo: T,
        hi: T,
        found: Curvature,
    },
    /// Type I output outside `{0, 1/2, 1}`.
    StepValue {
        x: T,
        value: T,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeReport<T> {
    pub violations: Vec<ShapeViolation<T>>,
    /// Curvature per region: one region for Types III/IV and tables, two for Type II
    /// (split at `tau`), none for Type I.
    pub curvature: Vec<(T, T, Curvature)>,
}

impl<T> ShapeReport<T> {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Shape validation of an arbitrary function against a family's defining pattern.
pub fn validate_shape_with<T: Scalar, F: Fn(T) -> T>(f: F, family: &Family<T>) -> ShapeReport<T> {
    let tol = shape_tolerance::<T>();
    let n = SHAPE_GRID + 1;
    let xs: Vec<T> = (0..=n).map(|i| T::of_usize(i) / T::of_usize(n)).collect();
    let ys: Vec<T> = xs.iter().map(|&x| f(x)).collect();
    let mut violations = Vec::new();

    for (x, target) in [(T::zero(), T::zero()), (T::one(), T::one())] {
        let value = f(x);
        if (value - target).abs() > tol {
            violations.push(ShapeViolation::Endpoint { x, value });
        }
    }
    for (&x, &y) in xs.iter().zip(&ys) {
        if !(y >= -tol && y <= T::one() + tol) {
            violations.push(ShapeViolation::OutOfRange { x, value: y });
        }
    }
    for i in 1..xs.len() {
        if ys[i] < ys[i - 1] - tol {
            violations.push(ShapeViolation::Decreasing { x: xs[i], drop: ys[i - 1] - ys[i] });
        }
    }

    let side = |lo: T, hi: T, above: bool, out: &mut Vec<ShapeViolation<T>>| {
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= lo || x >= hi {
                continue;
            }
            let ok = if above { y > x } else { y < x };
            if !ok {
                out.push(ShapeViolation::DiagonalSide { x, value: y });
            }
        }
    };
    let mut curvature = Vec::new();
    let mut expect_curv = |lo: T, hi: T, want: Curvature, out: &mut Vec<ShapeViolation<T>>| {
        let found = curvature_on(&xs, &ys, lo, hi);
        curvature.push((lo, hi, found));
        if found != want && found != Curvature::Linear {
            out.push(ShapeViolation::Curvature { lo, hi, found });
        }
    };

    match family {
        Family::TypeI { .. } => {
            for (&x, &y) in xs.iter().zip(&ys) {
                if y != T::zero() && y != T::half() && y != T::one() {
                    violations.push(ShapeViolation::StepValue { x, value: y });
                }
            }
        }
        Family::TypeII { tau, .. } => {
            side(T::zero(), *tau, false, &mut violations);
            side(*tau, T::one(), true, &mut violations);
            if (f(*tau) - *tau).abs() > tol {
                violations.push(ShapeViolation::DiagonalSide { x: *tau, value: f(*tau) });
            }
            expect_curv(T::zero(), *tau, Curvature::Convex, &mut violations);
            expect_curv(*tau, T::one(), Curvature::Concave, &mut violations);
        }
        Family::TypeIII { .. } => {
            side(T::zero(), T::one(), true, &mut violations);
            expect_curv(T::zero(), T::one(), Curvature::Concave, &mut violations);
        }
        Family::TypeIV { .. } => {
            side(T::zero(), T::one(), false, &mut violations);
            expect_curv(T::zero(), T::one(), Curvature::Convex, &mut violations);
        }
        Family::Tabulated { .. } => {
            let found = curvature_on(&xs, &ys, T::zero(), T::one());
            curvature.push((T::zero(), T::one(), found));
        }
    }
    ShapeReport { violations, curvature }
}

fn shape_tolerance<T: Scalar>() -> T {
    T::of(1e-12).max(T::epsilon() * T::of(64.0))
}

/// Classifies second differences of grid values whose centers lie strictly inside `(lo, hi)`.
fn curvature_on<T: Scalar>(xs: &[T], ys: &[T], lo: T, hi: T) -> Curvature {
    let tol = shape_tolerance::<T>();
    let (mut pos, mut neg) = (false, false);
    for i in 1..xs.len() - 1 {
        if xs[i - 1] < lo || xs[i + 1] > hi {
            continue;
        }
        let d2 = ys[i + 1] - ys[i] - ys[i] + ys[i - 1];
        if d2 > tol {
            pos = true;
        } else if d2 < -tol {
            neg = true;
        }
    }
    match (pos, neg) {
        (true, false) => Curvature::Convex,
        (false, true) => Curvature::Concave,
        (false, false) => Curvature::Linear,
        (true, true) => Curvature::Mixed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtins() -> Vec<Combat<f64>> {
        vec![
            Combat::type_i(1.0 / 3.0).unwrap(),
            Combat::type_ii_default(),
            Combat::type_iii_sqrt(),
            Combat::type_iv_square(),
        ]
    }

    #[test]
    fn type_i_step_values() {
        let f = Combat::type_i(1.0 / 3.0).unwrap();
        assert_eq!(f.eval_rb(0.4).unwrap(), 1.0);
        assert_eq!(f.eval_rb(0.2).unwrap(), 0.0);
        assert_eq!(f.eval_rb(1.0 / 3.0).unwrap(), 0.5);
        // red fraction above 1 - sigma turns a blue node red
        assert_eq!(f.eval_br(0.8).unwrap(), 1.0);
        assert_eq!(f.eval_br(0.5).unwrap(), 0.0);
    }

    #[test]
    fn type_ii_default_closed_forms() {
        let f = Combat::<f64>::type_ii_default();
        assert!((f.eval_rb(0.25).unwrap() - 0.125).abs() < 1e-15);
        assert!((f.eval_rb(0.75).unwrap() - 0.875).abs() < 1e-15);
        assert_eq!(f.eval_rb(0.5).unwrap(), 0.5);
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let closed = if x <= 0.5 { 2.0 * x * x } else { -2.0 * x * x + 4.0 * x - 1.0 };
            assert!((f.eval_rb(x).unwrap() - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn endpoints_and_duality_at_endpoints() {
        for f in builtins() {
            assert_eq!(f.eval_rb(0.0).unwrap(), 0.0, "{f}");
            assert_eq!(f.eval_rb(1.0).unwrap(), 1.0, "{f}");
            assert_eq!(f.eval_br(0.0).unwrap(), 0.0, "{f}");
            assert_eq!(f.eval_br(1.0).unwrap(), 1.0, "{f}");
        }
    }

    #[test]
    fn domain_errors() {
        let f = Combat::<f64>::type_iii_sqrt();
        assert_eq!(f.eval_rb(1.5), Err(CombatError::Domain(1.5)));
        assert!(f.eval_br(-0.1).is_err());
        assert!(Combat::type_i(1.0).is_err());
        assert!(Combat::type_iv(0.5).is_err());
        assert!(Combat::type_iii(1.5).is_err());
    }

    #[test]
    fn derivatives_of_builtins() {
        let iv = Combat::<f64>::type_iv_square();
        assert_eq!(iv.derivative_rb(0.0), Some(0.0));
        let iii = Combat::<f64>::type_iii_sqrt();
        assert!((iii.derivative_rb(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(iii.derivative_rb(0.0), None);
        let ii = Combat::<f64>::type_ii_default();
        assert!((ii.derivative_rb(0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((ii.derivative_rb(0.5 + 1e-9).unwrap() - 2.0).abs() < 1e-7);
        assert_eq!(ii.derivative_rb(1.0), Some(0.0));
        assert_eq!(Combat::type_i(0.5).unwrap().derivative_rb(0.2), None);
    }

    #[test]
    fn builtins_pass_shape_validation() {
        for f in builtins() {
            let report = f.validate_shape();
            assert!(report.is_valid(), "{f}: {:?}", &report.violations[..report.violations.len().min(3)]);
        }
    }

    #[test]
    fn type_ii_curvature_split_at_tau() {
        let report = Combat::<f64>::type_ii_default().validate_shape();
        assert_eq!(report.curvature.len(), 2);
        assert_eq!(report.curvature[0].2, Curvature::Convex);
        assert_eq!(report.curvature[1].2, Curvature::Concave);
    }

    #[test]
    fn bad_table_endpoint_is_reported() {
        let f = Combat::tabulated(vec![0.0, 0.5, 1.0], vec![0.0, 0.4, 0.9]).unwrap();
        let report = f.validate_shape();
        assert!(report.violations.iter().any(|v| matches!(v, ShapeViolation::Endpoint { x, .. } if *x == 1.0)));
    }

    #[test]
    fn table_parsing_and_interpolation() {
        let f = Combat::<f64>::from_table_str("# x f\n0 0\n0.5 0.25\n1 1\n").unwrap();
        assert!((f.eval_rb(0.25).unwrap() - 0.125).abs() < 1e-15);
        assert!((f.eval_rb(0.75).unwrap() - 0.625).abs() < 1e-15);
        assert_eq!(f.derivative_rb(0.25), Some(0.5));
        assert_eq!(f.derivative_rb(0.5), None);
        assert!(matches!(Combat::<f64>::from_table_str("0 0\n0.5\n1 1\n"), Err(CombatError::Table { line: 2, .. })));
        assert!(Combat::<f64>::from_table_str("0 0\n0.7 0.5\n0.6 0.6\n1 1\n").is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let f = Combat::<f32>::type_ii_default();
        assert!((f.eval_rb(0.25).unwrap() - 0.125).abs() < 1e-6);
        assert_eq!(f.eval_br(0.0).unwrap(), 0.0);
    }
}
