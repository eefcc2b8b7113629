//! Mean-field dynamics `dB_v/dt = f_RB(mean of B over N_v) - B_v`, integrated with
//! synchronous forward Euler, plus equilibrium classification and convergence-rate
//! measurements.

use std::io::Write;

use thiserror::Error;

use crate::combat::{Combat, Family};
use crate::graph::Graph;
use crate::scalar::Scalar;

/// Default Euler step.
pub const DEFAULT_DT: f64 = 0.01;
/// Values within this distance outside `[0, 1]` are clamped; larger excursions are errors.
pub const BOX_TOLERANCE: f64 = 1e-12;
/// Residual below which a state counts as an equilibrium.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error("invalid parameter {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error("state of node {node} left [0, 1] at t = {t}: {value}")]
    Unstable { node: usize, t: f64, value: f64 },
    #[error("not an equilibrium: node {node} has residual {residual}")]
    NotEquilibrium { node: usize, residual: f64 },
    #[error("trajectory has not converged to {target}: final distance {distance}")]
    NotConverged { target: f64, distance: f64 },
    #[error("hypothesis fails at t = 0: node {node} has neighbor mean {mean}")]
    Hypothesis { node: usize, mean: f64 },
    #[error("node {0} has no neighbors")]
    Isolated(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn param(name: &'static str, msg: impl Into<String>) -> MeanFieldError {
    MeanFieldError::Param { name, msg: msg.into() }
}

/// Mean of `b` over the neighbors of `v`.
#[inline]
pub fn neighbor_mean<T: Scalar>(g: &Graph, b: &[T], v: usize) -> T {
    let nbrs = g.neighbors(v);
    let sum: T = nbrs.iter().map(|&u| b[u as usize]).sum();
    sum / T::of_usize(nbrs.len())
}

/// Per-node blue probabilities at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState<T> {
    pub t: T,
    pub b: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions<T> {
    pub dt: T,
    pub horizon: T,
    /// Store a sample every this many steps.
    pub sample_every: usize,
    /// Keep the full per-node state at every sample.
    pub keep_states: bool,
}

impl<T: Scalar> IntegrateOptions<T> {
    pub fn new(dt: T, horizon: T) -> Self {
        Self { dt, horizon, sample_every: 1, keep_states: false }
    }

    pub fn sample_every(mut self, k: usize) -> Self {
        self.sample_every = k;
        self
    }

    pub fn keep_states(mut self, keep: bool) -> Self {
        self.keep_states = keep;
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().to_usize().unwrap_or(0)
    }

    fn validate(&self) -> Result<(), MeanFieldError> {
        if !(self.dt > T::zero() && self.dt <= T::one()) {
            return Err(param("dt", format!("{} not in (0, 1]", self.dt)));
        }
        if !(self.horizon >= T::zero()) || !self.horizon.is_finite() {
            return Err(param("horizon", "must be finite and non-negative"));
        }
        if self.sample_every == 0 {
            return Err(param("sample_every", "must be positive"));
        }
        Ok(())
    }
}

/// Sampled solution of the mean-field system.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub mean_blue: Vec<T>,
    pub min_b: Vec<T>,
    pub max_b: Vec<T>,
    /// Per-node state at each sample, when requested.
    pub states: Option<Vec<Vec<T>>>,
    pub initial: Vec<T>,
    pub final_state: MeanFieldState<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes `t, mean_blue, min_B, max_B`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MeanFieldError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mean_blue", "min_B", "max_B"])?;
        for i in 0..self.len() {
            w.write_record([
                self.times[i].to_string(),
                self.mean_blue[i].to_string(),
                self.min_b[i].to_string(),
                self.max_b[i].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `t, v, B_v` for every stored state.
    pub fn write_states_csv<W: Write>(&self, out: W) -> Result<(), MeanFieldError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "v", "B_v"])?;
        if let Some(states) = &self.states {
            for (t, s) in self.times.iter().zip(states) {
                for (v, b) in s.iter().enumerate() {
                    w.write_record([t.to_string(), v.to_string(), b.to_string()])?;
                }
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn summarize<T: Scalar>(b: &[T]) -> (T, T, T) {
    let n = T::of_usize(b.len());
    let mut sum = T::zero();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for &x in b {
        sum = sum + x;
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (sum / n, lo, hi)
}

/// Forward-Euler integration from `b0` with every node updated from the previous
/// snapshot: `B_v <- B_v + dt (f_RB(neighbor mean) - B_v)`.
pub fn integrate<T: Scalar>(
    g: &Graph,
    f: &Combat<T>,
    b0: &[T],
    options: IntegrateOptions<T>,
) -> Result<Trajectory<T>, MeanFieldError> {
    options.validate()?;
    if b0.len() != g.n() {
        return Err(param("b0", format!("{} entries for {} nodes", b0.len(), g.n())));
    }
    if let Some(v) = b0.iter().position(|x| !(*x >= T::zero() && *x <= T::one())) {
        return Err(param("b0", format!("entry {v} = {} outside [0, 1]", b0[v])));
    }
    if let Some(v) = g.isolated_nodes().first() {
        return Err(MeanFieldError::Isolated(*v));
    }
    let dt = options.dt;
    let steps = options.steps();
    let lo_bound = -T::of(BOX_TOLERANCE);
    let hi_bound = T::one() + T::of(BOX_TOLERANCE);

    let mut cur = b0.to_vec();
    let mut next = vec![T::zero(); g.n()];
    let cap = steps / options.sample_every + 1;
    let mut traj = Trajectory {
        times: Vec::with_capacity(cap),
        mean_blue: Vec::with_capacity(cap),
        min_b: Vec::with_capacity(cap),
        max_b: Vec::with_capacity(cap),
        states: options.keep_states.then(|| Vec::with_capacity(cap)),
        initial: b0.to_vec(),
        final_state: MeanFieldState { t: T::zero(), b: Vec::new() },
    };
    let record = |traj: &mut Trajectory<T>, t: T, b: &[T]| {
        let (mean, lo, hi) = summarize(b);
        traj.times.push(t);
        traj.mean_blue.push(mean);
        traj.min_b.push(lo);
        traj.max_b.push(hi);
        if let Some(states) = traj.states.as_mut() {
            states.push(b.to_vec());
        }
    };
    record(&mut traj, T::zero(), &cur);
    for step in 1..=steps {
        let t = T::of_usize(step) * dt;
        for v in 0..g.n() {
            let theta = f.rate_rb(neighbor_mean(g, &cur, v).max(T::zero()).min(T::one()));
            let x = cur[v] + dt * (theta - cur[v]);
            if !(x >= lo_bound && x <= hi_bound) {
                return Err(MeanFieldError::Unstable { node: v, t: t.as_f64(), value: x.as_f64() });
            }
            next[v] = x.max(T::zero()).min(T::one());
        }
        std::mem::swap(&mut cur, &mut next);
        if step % options.sample_every == 0 {
            record(&mut traj, t, &cur);
        }
    }
    traj.final_state = MeanFieldState { t: T::of_usize(steps) * dt, b: cur };
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquilibriumVerdict<T> {
    /// Locally asymptotically stable with the given exponential rate `(f'(z) - 1)` or `-1`.
    StableExponential {
        rate: T,
    },
    Unstable,
    Undetermined,
}

/// Stability of an equilibrium `b_star` of the mean-field system.
pub fn classify_equilibrium<T: Scalar>(
    g: &Graph,
    f: &Combat<T>,
    b_star: &[T],
) -> Result<EquilibriumVerdict<T>, MeanFieldError> {
    if b_star.len() != g.n() {
        return Err(param("b_star", format!("{} entries for {} nodes", b_star.len(), g.n())));
    }
    if let Some(v) = g.isolated_nodes().first() {
        return Err(MeanFieldError::Isolated(*v));
    }
    let means: Vec<T> = (0..g.n()).map(|v| neighbor_mean(g, b_star, v)).collect();
    let (worst, residual) = means
        .iter()
        .zip(b_star)
        .map(|(&m, &b)| (f.rate_rb(m.max(T::zero()).min(T::one())) - b).abs())
        .enumerate()
        .fold((0, T::zero()), |acc, (v, r)| if r > acc.1 { (v, r) } else { acc });
    if residual > T::of(EQUILIBRIUM_TOLERANCE) {
        return Err(MeanFieldError::NotEquilibrium { node: worst, residual: residual.as_f64() });
    }
    let eps = f.boundary_tolerance();
    let all = |target: T| b_star.iter().all(|&b| (b - target).abs() <= T::of(EQUILIBRIUM_TOLERANCE));
    let at_threshold = |th: T| b_star.iter().any(|&b| (b - th).abs() <= eps.max(T::of(EQUILIBRIUM_TOLERANCE)));
    let verdict = match f.family() {
        Family::TypeI { sigma } => {
            if at_threshold(*sigma) {
                EquilibriumVerdict::Unstable
            } else {
                // strict margin around sigma at every node
                let strict = b_star
                    .iter()
                    .zip(&means)
                    .all(|(&b, &m)| (b == T::one() && m > *sigma + eps) || (b == T::zero() && m < *sigma - eps));
                if strict {
                    EquilibriumVerdict::StableExponential { rate: -T::one() }
                } else {
                    EquilibriumVerdict::Undetermined
                }
            }
        }
        Family::TypeII { tau, .. } => {
            if all(T::one()) || all(T::zero()) {
                let z = if all(T::one()) { T::one() } else { T::zero() };
                rate_verdict(f, z)
            } else if at_threshold(*tau) {
                EquilibriumVerdict::Unstable
            } else {
                EquilibriumVerdict::Undetermined
            }
        }
        Family::TypeIII { .. } => {
            if all(T::one()) {
                rate_verdict(f, T::one())
            } else if all(T::zero()) {
                EquilibriumVerdict::Unstable
            } else {
                EquilibriumVerdict::Undetermined
            }
        }
        Family::TypeIV { .. } => {
            if all(T::zero()) {
                rate_verdict(f, T::zero())
            } else if all(T::one()) {
                EquilibriumVerdict::Unstable
            } else {
                EquilibriumVerdict::Undetermined
            }
        }
        Family::Tabulated { .. } => EquilibriumVerdict::Undetermined,
    };
    Ok(verdict)
}

fn rate_verdict<T: Scalar>(f: &Combat<T>, z: T) -> EquilibriumVerdict<T> {
    match predicted_convergence_rate(f, z) {
        Some(rate) if rate < T::zero() => EquilibriumVerdict::StableExponential { rate },
        Some(_) => EquilibriumVerdict::Unstable,
        None => EquilibriumVerdict::Undetermined,
    }
}

/// Linearized convergence exponent `f'_RB(z) - 1` at the uniform equilibrium `z`
/// (the largest eigenvalue of `D^-1 A` is 1). Type I converges at rate `-1`.
pub fn predicted_convergence_rate<T: Scalar>(f: &Combat<T>, z: T) -> Option<T> {
    if f.is_type_i() {
        return Some(-T::one());
    }
    f.derivative_rb(z).map(|d| d - T::one())
}

/// Least-squares slope of `ln ||B(t) - target||_inf` over the last `tail_fraction` of the
/// samples. Samples whose distance has fallen below `1e-12` are dropped, since rounding
/// dominates there.
pub fn empirical_convergence_rate<T: Scalar>(
    traj: &Trajectory<T>,
    target: T,
    tail_fraction: T,
) -> Result<T, MeanFieldError> {
    if !(tail_fraction > T::zero() && tail_fraction <= T::one()) {
        return Err(param("tail_fraction", "must be in (0, 1]"));
    }
    let dist: Vec<T> = (0..traj.len())
        .map(|i| if target == T::one() { T::one() - traj.min_b[i] } else { traj.max_b[i] - target })
        .map(|d| d.abs())
        .collect();
    let last = dist.last().copied().unwrap_or(T::infinity());
    if !(last < T::of(1e-3)) {
        return Err(MeanFieldError::NotConverged { target: target.as_f64(), distance: last.as_f64() });
    }
    let start = ((T::one() - tail_fraction) * T::of_usize(traj.len())).floor().to_usize().unwrap_or(0);
    let floor = T::of(1e-12);
    let pts: Vec<(T, T)> =
        (start..traj.len()).filter(|&i| dist[i] > floor).map(|i| (traj.times[i], dist[i].ln())).collect();
    if pts.len() < 2 {
        return Err(param("tail_fraction", "fewer than two usable samples in the tail window"));
    }
    let k = T::of_usize(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / k;
    let my = pts.iter().map(|p| p.1).sum::<T>() / k;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotoneMode {
    /// Neighbor means start above the threshold; `min_v B_v` must not decrease.
    Above,
    /// Neighbor means start below the threshold; `max_v B_v` must not increase.
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport<T> {
    pub mode: MonotoneMode,
    /// First sample index where the extremum moved the wrong way beyond tolerance.
    pub first_violation: Option<(usize, T)>,
    /// True when the extremum changed at every step, not merely never reversed.
    pub strict: bool,
}

impl<T> MonotonicityReport<T> {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks the monotone drift of `min_v B_v` (or `max_v B_v`) along a trajectory whose
/// initial neighbor means all lie on one side of `threshold`.
pub fn monotonicity_probe<T: Scalar>(
    g: &Graph,
    traj: &Trajectory<T>,
    threshold: T,
    mode: MonotoneMode,
    dt: T,
) -> Result<MonotonicityReport<T>, MeanFieldError> {
    for v in 0..g.n() {
        let m = neighbor_mean(g, &traj.initial, v);
        let ok = match mode {
            MonotoneMode::Above => m > threshold,
            MonotoneMode::Below => m < threshold,
        };
        if !ok {
            return Err(MeanFieldError::Hypothesis { node: v, mean: m.as_f64() });
        }
    }
    let tol = dt * T::of(1e-6);
    let series = match mode {
        MonotoneMode::Above => &traj.min_b,
        MonotoneMode::Below => &traj.max_b,
    };
    let mut first_violation = None;
    let mut strict = true;
    for i in 1..series.len() {
        let delta = series[i] - series[i - 1];
        let signed = match mode {
            MonotoneMode::Above => delta,
            MonotoneMode::Below => -delta,
        };
        if signed < -tol && first_violation.is_none() {
            first_violation = Some((i, traj.times[i]));
        }
        if signed <= T::zero() {
            strict = false;
        }
    }
    Ok(MonotonicityReport { mode, first_violation, strict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn cycle4() -> Graph {
        Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap()
    }

    #[test]
    fn neighbor_means() {
        let g = triangle();
        assert_eq!(neighbor_mean(&g, &[1.0, 1.0, 1.0], 0), 1.0);
        assert_eq!(neighbor_mean(&g, &[1.0, 0.0, 0.0], 0), 0.0);
        assert_eq!(neighbor_mean(&cycle4(), &[1.0, 0.0, 1.0, 0.0], 1), 1.0);
    }

    #[test]
    fn all_ones_is_a_fixed_point_for_every_family() {
        let g = cycle4();
        for f in
            [Combat::type_i(0.3).unwrap(), Combat::type_ii_default(), Combat::type_iii_sqrt(), Combat::type_iv_square()]
        {
            let traj = integrate(&g, &f, &[1.0; 4], IntegrateOptions::new(0.01, 5.0)).unwrap();
            assert!(traj.mean_blue.iter().all(|&m| m == 1.0), "{f}");
        }
    }

    #[test]
    fn type_i_above_threshold_matches_closed_form() {
        // every neighbor mean is 0.4 > 1/3 so theta = 1 and B = 1 - 0.6 (1 - dt)^k
        let g = cycle4();
        let f = Combat::type_i(1.0 / 3.0).unwrap();
        let traj = integrate(&g, &f, &[0.4; 4], IntegrateOptions::new(0.01, 5.0)).unwrap();
        let last = *traj.mean_blue.last().unwrap();
        let euler = 1.0 - 0.6 * 0.99f64.powi(500);
        assert!((last - euler).abs() < 1e-12);
        assert!((last - (1.0 - 0.6 * (-5.0f64).exp())).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = cycle4();
        let f = Combat::type_iv_square();
        assert!(integrate(&g, &f, &[0.5; 3], IntegrateOptions::new(0.01, 1.0)).is_err());
        assert!(integrate(&g, &f, &[1.5, 0.0, 0.0, 0.0], IntegrateOptions::new(0.01, 1.0)).is_err());
        assert!(integrate(&g, &f, &[0.5; 4], IntegrateOptions::new(0.0, 1.0)).is_err());
        assert!(integrate(&g, &f, &[0.5; 4], IntegrateOptions::new(2.0, 1.0)).is_err());
    }

    #[test]
    fn sampling_stride() {
        let g = cycle4();
        let f = Combat::type_iv_square();
        let opts = IntegrateOptions::new(0.01, 1.0).sample_every(10).keep_states(true);
        let traj: Trajectory<f64> = integrate(&g, &f, &[0.5; 4], opts).unwrap();
        assert_eq!(traj.len(), 11);
        assert!((traj.times[10] - 1.0).abs() < 1e-12);
        assert_eq!(traj.states.as_ref().unwrap().len(), 11);
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn classification_examples() {
        let g = triangle();
        let t1 = Combat::type_i(1.0 / 3.0).unwrap();
        assert_eq!(
            classify_equilibrium(&g, &t1, &[1.0; 3]).unwrap(),
            EquilibriumVerdict::StableExponential { rate: -1.0 }
        );
        // with sigma = 1/2 the uniform half state is an equilibrium sitting on the threshold
        let half = Combat::type_i(0.5).unwrap();
        assert_eq!(classify_equilibrium(&g, &half, &[0.5; 3]).unwrap(), EquilibriumVerdict::Unstable);
        let t3 = Combat::type_iii_sqrt();
        assert_eq!(classify_equilibrium(&g, &t3, &[0.0; 3]).unwrap(), EquilibriumVerdict::Unstable);
        assert_eq!(
            classify_equilibrium(&g, &t3, &[1.0; 3]).unwrap(),
            EquilibriumVerdict::StableExponential { rate: -0.5 }
        );
        let t4 = Combat::type_iv_square();
        assert_eq!(
            classify_equilibrium(&g, &t4, &[0.0; 3]).unwrap(),
            EquilibriumVerdict::StableExponential { rate: -1.0 }
        );
        assert_eq!(classify_equilibrium(&g, &t4, &[1.0; 3]).unwrap(), EquilibriumVerdict::Unstable);
        let t2 = Combat::type_ii_default();
        assert_eq!(classify_equilibrium(&g, &t2, &[0.5; 3]).unwrap(), EquilibriumVerdict::Unstable);
        assert!(matches!(
            classify_equilibrium(&g, &t2, &[1.0, 0.4, 1.0]),
            Err(MeanFieldError::NotEquilibrium { node: 1, .. })
        ));
    }

    #[test]
    fn mixed_two_cluster_equilibrium_is_undetermined_for_type_ii() {
        // two triangles joined by one edge; blue on one side, red on the other
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]).unwrap();
        let f = Combat::type_ii_default();
        let b = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        // not an exact equilibrium: nodes 2 and 3 see a mixed neighborhood
        assert!(classify_equilibrium(&g, &f, &b).is_err());
        let t1 = Combat::type_i(0.5).unwrap();
        assert_eq!(classify_equilibrium(&g, &t1, &b).unwrap(), EquilibriumVerdict::StableExponential { rate: -1.0 });
    }

    #[test]
    fn predicted_rates() {
        assert_eq!(predicted_convergence_rate(&Combat::<f64>::type_iv_square(), 0.0), Some(-1.0));
        assert_eq!(predicted_convergence_rate(&Combat::<f64>::type_iii_sqrt(), 1.0), Some(-0.5));
        assert_eq!(predicted_convergence_rate(&Combat::type_i(0.4).unwrap(), 1.0), Some(-1.0));
        assert_eq!(predicted_convergence_rate(&Combat::<f64>::type_ii_default(), 1.0), Some(-1.0));
        assert_eq!(predicted_convergence_rate(&Combat::<f64>::type_iii_sqrt(), 0.0), None);
    }

    #[test]
    fn empirical_rate_of_exact_exponential() {
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let min_b: Vec<f64> = times.iter().map(|t| 1.0 - 0.5 * (-t).exp()).collect();
        let traj = Trajectory {
            mean_blue: min_b.clone(),
            max_b: vec![1.0; times.len()],
            min_b,
            times,
            states: None,
            initial: vec![0.5],
            final_state: MeanFieldState { t: 20.0, b: vec![1.0] },
        };
        let slope = empirical_convergence_rate(&traj, 1.0, 0.5).unwrap();
        assert!((slope + 1.0).abs() < 0.05 * 1.0, "{slope}");
    }

    #[test]
    fn monotonicity_of_type_ii_above_and_below() {
        let g = cycle4();
        let f = Combat::type_ii_default();
        let up = integrate(&g, &f, &[0.6; 4], IntegrateOptions::new(0.01, 10.0)).unwrap();
        let rep = monotonicity_probe(&g, &up, 0.5, MonotoneMode::Above, 0.01).unwrap();
        assert!(rep.holds() && rep.strict);
        let down = integrate(&g, &f, &[0.4; 4], IntegrateOptions::new(0.01, 10.0)).unwrap();
        let rep = monotonicity_probe(&g, &down, 0.5, MonotoneMode::Below, 0.01).unwrap();
        assert!(rep.holds() && rep.strict);
        assert!(matches!(
            monotonicity_probe(&g, &down, 0.5, MonotoneMode::Above, 0.01),
            Err(MeanFieldError::Hypothesis { .. })
        ));
        let fixed = integrate(&g, &f, &[1.0; 4], IntegrateOptions::new(0.01, 1.0)).unwrap();
        let rep = monotonicity_probe(&g, &fixed, 0.5, MonotoneMode::Above, 0.01).unwrap();
        assert!(rep.holds() && !rep.strict);
    }
}
