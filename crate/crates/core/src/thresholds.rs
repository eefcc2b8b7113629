//! Initial-occupation thresholds, the degree-heterogeneity factor `h(z, gamma)`, the
//! finite-n quantities behind the strategic-defender limit theorem, and the empirical
//! Markov threshold.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use thiserror::Error;

use crate::combat::Combat;
use crate::generate::ExpectedDegreeSequence;
use crate::graph::Graph;
use crate::markov::{simulate_ensemble, EnsembleOptions, InitialCondition, MarkovError, NodeStates, RunOptions};
use crate::scalar::Scalar;

/// `|gamma - k|` below which the closed-form special case `k` of [`h`] is used.
pub const BRANCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("invalid parameter {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error("z = {0} must exceed 1")]
    Domain(f64),
    #[error("expected degrees violate d_max^2 <= sum(d)")]
    LinkProbability,
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn param(name: &'static str, msg: impl Into<String>) -> ThresholdError {
    ThresholdError::Param { name, msg: msg.into() }
}

fn check_sigma<T: Scalar>(sigma: T) -> Result<(), ThresholdError> {
    if sigma >= T::zero() && sigma <= T::one() {
        Ok(())
    } else {
        Err(param("sigma", format!("{sigma} outside [0, 1]")))
    }
}

/// `[sum d]^2 / (n sum d^2)`, at most 1 with equality iff all degrees are equal.
pub fn degree_homogeneity<T: Scalar>(degrees: &[T]) -> Result<T, ThresholdError> {
    if degrees.is_empty() {
        return Err(param("degrees", "empty sequence"));
    }
    if let Some(i) = degrees.iter().position(|d| !(*d >= T::one()) || !d.is_finite()) {
        return Err(param("degrees", format!("entry {i} = {} is below 1", degrees[i])));
    }
    let s: T = degrees.iter().copied().sum();
    let s2: T = degrees.iter().map(|&d| d * d).sum();
    Ok((s * s / (T::of_usize(degrees.len()) * s2)).min(T::one()))
}

/// Strategic-defender threshold `sigma [sum d]^2 / (n sum d^2)`.
pub fn alpha_threshold<T: Scalar>(degrees: &[T], sigma: T) -> Result<T, ThresholdError> {
    check_sigma(sigma)?;
    Ok(sigma * degree_homogeneity(degrees)?)
}

/// Strategic-attacker threshold `1 - (1 - sigma) [sum d]^2 / (n sum d^2)`.
pub fn beta_threshold<T: Scalar>(degrees: &[T], sigma: T) -> Result<T, ThresholdError> {
    check_sigma(sigma)?;
    Ok(T::one() - (T::one() - sigma) * degree_homogeneity(degrees)?)
}

/// Closed form of `[sum d]^2 / (n sum d^2)` for power-law expected degrees with exponent
/// `gamma` and spread `z = d_max / d_min`, in the large-n limit.
pub fn h<T: Scalar>(z: T, gamma: T) -> Result<T, ThresholdError> {
    if !(z > T::one()) || !z.is_finite() {
        return Err(ThresholdError::Domain(z.as_f64()));
    }
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(param("gamma", "must be positive"));
    }
    let near = |k: f64| (gamma - T::of(k)).abs() < T::of(BRANCH_TOLERANCE);
    let one = T::one();
    let two = T::two();
    let ln = z.ln();
    let value = if near(1.0) || near(3.0) {
        two * (z - one) / ((z + one) * ln)
    } else if near(2.0) {
        z * ln * ln / ((z - one) * (z - one))
    } else {
        let three = T::of(3.0);
        let a = z.powf(two - gamma) - one;
        let b = z.powf(one - gamma) - one;
        let c = z.powf(three - gamma) - one;
        a * a / (b * c) * ((three - gamma) * (one - gamma)) / ((two - gamma) * (two - gamma))
    };
    Ok(value)
}

/// Thresholds implied by [`h`]: `alpha = sigma h`, `beta = 1 - (1 - sigma) h`, their gap
/// `1 - h` and ratio `1 + (1 - h) / (sigma h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategicThresholds<T> {
    pub h: T,
    pub alpha: T,
    pub beta: T,
    pub gap: T,
    pub ratio: T,
}

pub fn strategic_thresholds<T: Scalar>(z: T, gamma: T, sigma: T) -> Result<StrategicThresholds<T>, ThresholdError> {
    check_sigma(sigma)?;
    let h = h(z, gamma)?;
    Ok(StrategicThresholds {
        h,
        alpha: sigma * h,
        beta: T::one() - (T::one() - sigma) * h,
        gap: T::one() - h,
        ratio: T::one() + (T::one() - h) / (sigma * h),
    })
}

/// Thresholds of a concrete degree sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport<T> {
    pub sigma: T,
    pub alpha_threshold: T,
    pub beta_threshold: T,
    /// Empirical counterpart of `h`: `[sum d]^2 / (n sum d^2)`.
    pub h_value: T,
    pub diagnostics: Option<Theorem4Diagnostics<T>>,
}

pub fn threshold_report<T: Scalar>(degrees: &[T], sigma: T) -> Result<ThresholdReport<T>, ThresholdError> {
    check_sigma(sigma)?;
    let h_value = degree_homogeneity(degrees)?;
    Ok(ThresholdReport {
        sigma,
        alpha_threshold: sigma * h_value,
        beta_threshold: T::one() - (T::one() - sigma) * h_value,
        h_value,
        diagnostics: None,
    })
}

/// Degree-weighted blue fraction `sum_{v in S} deg(v) / sum_u deg(u)`.
pub fn phi<T: Scalar>(g: &Graph, blue: &[usize]) -> Result<T, ThresholdError> {
    let mut seen = vec![false; g.n()];
    let mut num = 0usize;
    for &v in blue {
        if v >= g.n() {
            return Err(param("blue", format!("node {v} outside 0..{}", g.n())));
        }
        if !std::mem::replace(&mut seen[v], true) {
            num += g.degree(v);
        }
    }
    let total = 2 * g.edge_count();
    if total == 0 {
        return Err(param("g", "graph has no edges"));
    }
    Ok(T::of_usize(num) / T::of_usize(total))
}

/// [`phi`] of the blue nodes of a 0/1 state vector.
pub fn phi_of_states<T: Scalar>(g: &Graph, xi: &[u8]) -> T {
    let mut num = 0usize;
    let mut total = 0usize;
    for (v, &b) in xi.iter().enumerate() {
        let d = g.degree(v);
        total += d;
        if b == 1 {
            num += d;
        }
    }
    T::of_usize(num) / T::of_usize(total.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategicTarget<T> {
    /// Expected fraction of blue nodes `|S| / n`.
    Fraction(T),
    /// Expected degree-weighted blue fraction.
    Phi(T),
}

/// Degree-proportional initial probabilities and one sampled configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategicInit<T> {
    /// Solved proportionality constant in `B_v(0) = min(1, C deg(v) / sum deg)`.
    pub c: T,
    pub b0: Vec<T>,
    pub states: NodeStates,
    pub realized_phi: T,
    /// Nodes whose probability hit the cap of 1.
    pub capped: usize,
}

/// Probabilities `B_v(0) = min(1, C deg(v) / sum deg)` with `C` solved by bisection so that
/// the target holds in expectation.
pub fn strategic_probabilities<T: Scalar>(
    g: &Graph,
    target: StrategicTarget<T>,
) -> Result<(T, Vec<T>, usize), ThresholdError> {
    let n = g.n();
    let degrees: Vec<T> = (0..n).map(|v| T::of_usize(g.degree(v))).collect();
    let total: T = degrees.iter().copied().sum();
    if n == 0 || total == T::zero() {
        return Err(param("g", "graph has no edges"));
    }
    let (t, weighted) = match target {
        StrategicTarget::Fraction(t) => (t, false),
        StrategicTarget::Phi(t) => (t, true),
    };
    if !(t >= T::zero() && t <= T::one()) {
        return Err(param("target", format!("{t} outside [0, 1]")));
    }
    if weighted && degrees.iter().any(|&d| d == T::zero()) && t == T::one() {
        return Err(param("target", "isolated nodes keep phi below 1"));
    }
    let probs = |c: T| -> Vec<T> { degrees.iter().map(|&d| (c * d / total).min(T::one())).collect() };
    let achieved = |c: T| -> T {
        let p = probs(c);
        if weighted {
            p.iter().zip(&degrees).map(|(&p, &d)| p * d).sum::<T>() / total
        } else {
            p.iter().copied().sum::<T>() / T::of_usize(n)
        }
    };
    let d_min = degrees.iter().copied().filter(|&d| d > T::zero()).fold(T::infinity(), T::min);
    let mut lo = T::zero();
    let mut hi = total / d_min;
    let c = if t == T::one() {
        hi
    } else {
        for _ in 0..200 {
            let mid = (lo + hi) * T::half();
            if achieved(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) * T::half()
    };
    let b0 = probs(c);
    let capped = b0.iter().filter(|&&p| p >= T::one()).count();
    Ok((c, b0, capped))
}

/// [`strategic_probabilities`] followed by independent sampling of the blue set.
pub fn strategic_init<T: Scalar>(
    g: &Graph,
    target: StrategicTarget<T>,
    seed: u64,
) -> Result<StrategicInit<T>, ThresholdError> {
    let (c, b0, capped) = strategic_probabilities(g, target)?;
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let xi: Vec<u8> = b0.iter().map(|&p| u8::from(T::of(rng.random::<f64>()) < p)).collect();
    let realized_phi = phi_of_states(g, &xi);
    Ok(StrategicInit { c, b0, states: NodeStates { xi, t: 0.0 }, realized_phi, capped })
}

/// Finite-n values of the quantities whose limits the strategic-defender theorem assumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem4Diagnostics<T> {
    pub s2: Vec<T>,
    pub q: Vec<T>,
    pub w2: Vec<T>,
    pub g: Vec<T>,
    /// `sup_v q / s^3`; `None` when some `s` is zero.
    pub sup_q_over_s3: Option<T>,
    /// `sup_v g / w^3`.
    pub sup_g_over_w3: Option<T>,
    /// `sqrt(ln n) / d_min`.
    pub sqrt_ln_n_over_dmin: T,
    /// `sum g / (sum w^2)^{3/2}`.
    pub sum_g_over_sum_w2: Option<T>,
    /// `sum q / (sum s^2)^{3/2}`.
    pub sum_q_over_sum_s2: Option<T>,
    /// `sum_v 1 / d_v^2`.
    pub sum_inv_d2: T,
}

impl<T: Scalar> Theorem4Diagnostics<T> {
    /// The six ratios in order, `None` where undefined.
    pub fn ratios(&self) -> [Option<T>; 6] {
        [
            self.sup_q_over_s3,
            self.sup_g_over_w3,
            Some(self.sqrt_ln_n_over_dmin),
            self.sum_g_over_sum_w2,
            self.sum_q_over_sum_s2,
            Some(self.sum_inv_d2),
        ]
    }
}

/// Sums over all `u` (including `u = v`) with `p_vu = d_u d_v / sum d`.
pub fn theorem4_diagnostics<T: Scalar>(
    d: &ExpectedDegreeSequence<T>,
    b0: &[T],
) -> Result<Theorem4Diagnostics<T>, ThresholdError> {
    if !d.link_probabilities_valid() {
        return Err(ThresholdError::LinkProbability);
    }
    let n = d.len();
    if b0.len() != n {
        return Err(param("b0", format!("{} entries for {n} nodes", b0.len())));
    }
    let ds = d.as_slice();
    let total = d.sum();
    let mut s2 = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    let mut w2 = vec![T::zero(); n];
    let mut gv = vec![T::zero(); n];
    for v in 0..n {
        let (mut a, mut b, mut c, mut e) = (T::zero(), T::zero(), T::zero(), T::zero());
        for u in 0..n {
            let p = ds[u] * ds[v] / total;
            let var = p * (T::one() - p);
            let third = var * ((T::one() - p).powi(2) + p * p);
            let bu = b0[u];
            a = a + bu * bu * var;
            b = b + bu * bu * bu * third;
            c = c + var;
            e = e + third;
        }
        s2[v] = a;
        q[v] = b;
        w2[v] = c;
        gv[v] = e;
    }
    let sup_ratio = |num: &[T], den2: &[T]| -> Option<T> {
        let mut best = T::zero();
        for (&x, &y) in num.iter().zip(den2) {
            if y <= T::zero() {
                return None;
            }
            best = best.max(x / y.powf(T::of(1.5)));
        }
        Some(best)
    };
    let sum_ratio = |num: &[T], den2: &[T]| -> Option<T> {
        let s: T = den2.iter().copied().sum();
        (s > T::zero()).then(|| num.iter().copied().sum::<T>() / s.powf(T::of(1.5)))
    };
    Ok(Theorem4Diagnostics {
        sup_q_over_s3: sup_ratio(&q, &s2),
        sup_g_over_w3: sup_ratio(&gv, &w2),
        sqrt_ln_n_over_dmin: T::of_usize(n).ln().sqrt() / d.d_min(),
        sum_g_over_sum_w2: sum_ratio(&gv, &w2),
        sum_q_over_sum_s2: sum_ratio(&q, &s2),
        sum_inv_d2: ds.iter().map(|&x| T::one() / (x * x)).sum(),
        s2,
        q,
        w2,
        g: gv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitRule {
    /// `B_v(0) = level` at every node.
    Uniform,
    /// `B_v(0)` proportional to degree with mean `level`.
    Strategic,
}

impl InitRule {
    pub fn initial_condition<T: Scalar>(&self, g: &Graph, level: T) -> Result<InitialCondition<T>, ThresholdError> {
        match self {
            Self::Uniform => Ok(InitialCondition::uniform(g.n(), level)),
            Self::Strategic => {
                let (_, b0, _) = strategic_probabilities(g, StrategicTarget::Fraction(level))?;
                Ok(InitialCondition::Bernoulli(b0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelVerdict {
    AllBlue,
    AllRed,
    Mixed,
}

impl LevelVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AllBlue => "all_blue",
            Self::AllRed => "all_red",
            Self::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelOutcome<T> {
    pub level: T,
    pub n_all_blue: usize,
    pub n_all_red: usize,
    /// Runs that did not absorb before the horizon.
    pub n_mixed: usize,
    pub verdict: LevelVerdict,
}

/// Bracket of unanimous outcomes around the Markov threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaMarkovEstimate<T> {
    pub grid: Vec<LevelOutcome<T>>,
    /// Smallest level from which every level upward is unanimously all blue.
    pub a1: Option<T>,
    /// Largest level up to which every level is unanimously all red.
    pub b1: Option<T>,
    pub sigma_markov: Option<T>,
}

impl<T: Scalar> SigmaMarkovEstimate<T> {
    pub fn from_grid(grid: Vec<LevelOutcome<T>>) -> Self {
        let a1 = grid.iter().rev().take_while(|o| o.verdict == LevelVerdict::AllBlue).last().map(|o| o.level);
        let b1 = grid.iter().take_while(|o| o.verdict == LevelVerdict::AllRed).last().map(|o| o.level);
        let sigma_markov = match (a1, b1) {
            (Some(a), Some(b)) => Some((a + b) * T::half()),
            _ => None,
        };
        Self { grid, a1, b1, sigma_markov }
    }

    pub fn is_conclusive(&self) -> bool {
        self.sigma_markov.is_some()
    }

    /// No unanimous all-red level lies above a unanimous all-blue level.
    pub fn is_monotone_consistent(&self) -> bool {
        let first_blue = self.grid.iter().position(|o| o.verdict == LevelVerdict::AllBlue);
        match first_blue {
            Some(i) => self.grid[i..].iter().all(|o| o.verdict != LevelVerdict::AllRed),
            None => true,
        }
    }

    /// Writes `level, n_all_blue, n_all_red, n_mixed, verdict` and a summary row
    /// `a1, b1, sigma_markov` (empty fields when inconclusive).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ThresholdError> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(["level", "n_all_blue", "n_all_red", "n_mixed", "verdict"])?;
        for o in &self.grid {
            w.write_record([
                o.level.to_string(),
                o.n_all_blue.to_string(),
                o.n_all_red.to_string(),
                o.n_mixed.to_string(),
                o.verdict.as_str().to_string(),
            ])?;
        }
        let show = |x: Option<T>| x.map(|v| v.to_string()).unwrap_or_default();
        w.write_record(["a1", "b1", "sigma_markov"])?;
        w.write_record([show(self.a1), show(self.b1), show(self.sigma_markov)])?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Default occupation grid: 0.05, 0.06, ..., 0.95.
pub fn default_grid<T: Scalar>() -> Vec<T> {
    level_grid(T::of(0.05), T::of(0.95), T::of(0.01))
}

/// `start, start + step, ...` up to `stop` inclusive, built by integer multiples.
pub fn level_grid<T: Scalar>(start: T, stop: T, step: T) -> Vec<T> {
    let k = ((stop - start) / step + T::of(1e-9)).floor().to_usize().unwrap_or(0);
    (0..=k).map(|i| start + T::of_usize(i) * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaMarkovOptions<T> {
    pub run: RunOptions<T>,
    pub runs: usize,
    pub master_seed: u64,
}

/// Runs an ensemble at every grid level and brackets the threshold.
///
/// Every level uses the same master seed, so run `i` at two levels shares its random
/// stream; with a uniform rule the initial blue sets are then nested across levels.
pub fn estimate_sigma_markov<T: Scalar>(
    g: &Graph,
    f: &Combat<T>,
    rule: InitRule,
    grid: &[T],
    options: SigmaMarkovOptions<T>,
) -> Result<SigmaMarkovEstimate<T>, ThresholdError> {
    if grid.is_empty() {
        return Err(param("grid", "no levels"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(param("grid", "levels must be strictly ascending"));
    }
    let mut outcomes = Vec::with_capacity(grid.len());
    for &level in grid {
        let init = rule.initial_condition(g, level)?;
        let opts = EnsembleOptions::new(options.run, options.runs, options.master_seed);
        let e = simulate_ensemble(g, f, &init, opts)?;
        let (b, r, m) = (e.count_all_blue(), e.count_all_red(), e.count_unabsorbed());
        let verdict = if b == e.n_runs() {
            LevelVerdict::AllBlue
        } else if r == e.n_runs() {
            LevelVerdict::AllRed
        } else {
            LevelVerdict::Mixed
        };
        outcomes.push(LevelOutcome { level, n_all_blue: b, n_all_red: r, n_mixed: m, verdict });
    }
    Ok(SigmaMarkovEstimate::from_grid(outcomes))
}
